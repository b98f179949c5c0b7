"""Command line entry: run experiment spec files and write CSV reports.

    python -m src.main run specs/remark.spec --out results --threads 4 --seed 7
"""

import argparse
import logging
import re
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import ValidationError

from src.config import LOG_FORMAT, VERSION, get_settings
from src.errors import InputError, NumericalError, ParseError
from src.experiments import PARAMS, ExperimentPipeline
from src.models import ExperimentReport, ExperimentSpec

logger = logging.getLogger(__name__)

COMMON_KEYS = ("experiment", "label", "seed", "output")
EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3
FLOAT_FORMAT = "%.17g"

_SECTION = re.compile(r"^\[\s*experiment\s*\]$")
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _scalar(token: str) -> Any:
    for cast in (int, float):
        try:
            return cast(token)
        except ValueError:
            pass
    return token


def _value(raw: str) -> Any:
    if "," in raw:
        return [_scalar(t.strip()) for t in raw.split(",") if t.strip()]
    return _scalar(raw)


def _sections(text: str) -> List[List[Tuple[int, str, str]]]:
    """Split into sections of (line number, key, raw value); lines before the first
    header form an implicit section"""
    sections: List[List[Tuple[int, str, str]]] = [[]]
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if _SECTION.match(line):
            sections.append([])
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", line=number)
        key, raw = (part.strip() for part in line.split("=", 1))
        if not _KEY.match(key):
            raise ParseError(f"invalid key {key!r}", line=number)
        if not raw:
            raise ParseError(f"key {key!r} has no value", line=number)
        sections[-1].append((number, key, raw))
    return [s for s in sections if s]


def _build_spec(entries: List[Tuple[int, str, str]], fallback_label: str) -> ExperimentSpec:
    lines: Dict[str, int] = {}
    values: Dict[str, Any] = {}
    for number, key, raw in entries:
        if key in lines:
            raise ParseError(f"duplicate key {key!r} (first given on line {lines[key]})", line=number)
        lines[key] = number
        values[key] = _value(raw)

    first = entries[0][0]
    if "experiment" not in values:
        raise ParseError("section has no 'experiment' key", line=first)
    name = values.pop("experiment")
    if name not in PARAMS:
        raise ParseError(f"unknown experiment {name!r}", line=lines["experiment"])
    model = PARAMS[name]
    for key in values:
        if key not in COMMON_KEYS and key not in model.model_fields:
            raise ParseError(f"unknown key {key!r} for {name}", line=lines[key])

    common = {k: values.pop(k) for k in ("label", "seed", "output") if k in values}
    if "seed" in common and not isinstance(common["seed"], int):
        raise ParseError("seed must be an integer", line=lines["seed"])
    try:
        model(**values)
    except ValidationError as e:
        error = e.errors()[0]
        field = str(error["loc"][0]) if error["loc"] else None
        raise ParseError(f"{field or name}: {error['msg']}", line=lines.get(field, first)) from e
    return ExperimentSpec(experiment=name, label=str(common.get("label", fallback_label)),
                          params=values, seed=common.get("seed"),
                          output=None if "output" not in common else str(common["output"]))


def parse_suite(text: str) -> List[ExperimentSpec]:
    """Parse every [experiment] section of a spec file"""
    sections = _sections(text)
    if not sections:
        raise ParseError("spec file defines no experiment", line=1)
    specs = []
    used = set()
    for index, entries in enumerate(sections):
        spec = _build_spec(entries, fallback_label="")
        label = spec.label or spec.experiment
        if label in used:
            if spec.label:
                raise ParseError(f"label {label!r} used twice", line=entries[0][0])
            label = f"{spec.experiment}_{index + 1}"
        used.add(label)
        specs.append(spec.model_copy(update={"label": label}))
    return specs


def parse_spec(text: str) -> ExperimentSpec:
    """Parse a spec file holding exactly one experiment"""
    specs = parse_suite(text)
    if len(specs) != 1:
        raise ParseError(f"expected one experiment, found {len(specs)}", line=1)
    return specs[0]


def write_report(report: ExperimentReport, out_dir: Path, filename: Optional[str] = None) -> Path:
    """CSV with a '#'-prefixed metadata preamble"""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / (filename or f"{report.label}.csv")
    preamble = "".join(f"# {key}: {_format(value)}\n" for key, value in report.metadata.items())
    body = report.frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    path.write_text(preamble + body)
    return path


def _format(value: Any) -> str:
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    return str(value)


def run(spec_file: str, out: Optional[str] = None, threads: Optional[int] = None,
        seed: Optional[int] = None) -> int:
    """Run every experiment of a spec file; returns the process exit code"""
    try:
        settings = get_settings()
        text = Path(spec_file).read_text()
    except InputError as e:
        logger.error(f"invalid configuration: {e}")
        return EXIT_INPUT
    except OSError as e:
        logger.error(f"cannot read {spec_file}: {e}")
        return EXIT_INPUT
    out_dir = Path(out or settings.out_dir)

    try:
        specs = parse_suite(text)
        pipeline = ExperimentPipeline(settings, threads=threads, seed=seed)
        reports = [(spec, pipeline.run(spec)) for spec in specs]
    except InputError as e:
        logger.error(f"invalid input: {e}")
        return EXIT_INPUT
    except NumericalError as e:
        logger.error(f"numerical failure: {e}")
        return EXIT_NUMERICAL

    try:
        for spec, report in reports:
            path = write_report(report, out_dir, spec.output)
            logger.info(f"Wrote {path}")
    except OSError as e:
        logger.error(f"cannot write reports to {out_dir}: {e}")
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="criticality-lab",
                                     description="Criticality experiments for Schrodinger forms")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)
    runner = commands.add_parser("run", help="run the experiments of a spec file")
    runner.add_argument("spec_file")
    runner.add_argument("--out", help="output directory (default: CRITICALITY_OUT_DIR)")
    runner.add_argument("--threads", type=int, help="worker threads for Monte Carlo blocks")
    runner.add_argument("--seed", type=int, help="global seed overriding spec seeds")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings()
    except InputError as e:
        logging.basicConfig(format=LOG_FORMAT)
        logger.error(f"invalid configuration: {e}")
        return EXIT_INPUT
    logging.basicConfig(level=getattr(logging, settings.log_level), format=LOG_FORMAT)
    return run(args.spec_file, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
