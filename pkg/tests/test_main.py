import numpy as np
import pandas as pd
import pytest

from src.errors import ParseError
from src.main import EXIT_INPUT, EXIT_OK, main, parse_spec, parse_suite, run


def write(tmp_path, text, name="exp.spec"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    return pd.read_csv(path, comment="#")


def test_parse_valid_spec():
    spec = parse_spec("experiment = remark_example\nalpha = 1.0\nbeta = 0.1")
    assert spec.experiment == "remark_example"
    assert spec.label == "remark_example"
    assert spec.params == {"alpha": 1.0, "beta": 0.1}


def test_parse_lists_comments_and_exponents():
    spec = parse_spec("# scan\nexperiment = threshold_scan  # comment\nbeta = 5e-2, 0.1,0.2\nseed = 9\n")
    assert spec.params["beta"] == [0.05, 0.1, 0.2]
    assert spec.seed == 9


def test_negative_weight_is_rejected_with_line():
    with pytest.raises(ParseError) as info:
        parse_spec("experiment = remark_example\nalpha = -1")
    assert info.value.line == 2


def test_duplicate_key_flags_second_occurrence():
    with pytest.raises(ParseError) as info:
        parse_spec("experiment = remark_example\nalpha = 1\nalpha = 2")
    assert info.value.line == 3


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("alpha = 1", 1),
    ("experiment = nothing", 1),
    ("experiment = remark_example\ngamma = 1", 2),
    ("experiment = remark_example\nalpha 1", 2),
    ("experiment = sphere_example\nd = 2", 2),
])
def test_parse_errors(text, line):
    with pytest.raises(ParseError) as info:
        parse_spec(text)
    assert info.value.line == line


def test_suite_sections_get_distinct_labels():
    specs = parse_suite("[experiment]\nexperiment = remark_example\n\n[experiment]\n"
                        "experiment = remark_example\nalpha = 2\n\n[experiment]\n"
                        "experiment = boundary_diag\nlabel = edge\n")
    assert [s.label for s in specs] == ["remark_example", "remark_example_2", "edge"]


def test_run_remark_example(tmp_path):
    out = tmp_path / "out"
    spec = write(tmp_path, "experiment = remark_example\nalpha = 1.0\nbeta = 0.1\n")
    assert run(spec, out=str(out)) == EXIT_OK
    path = out / "remark_example.csv"
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# version:")
    assert any(line.startswith("# h:") for line in lines)
    frame = read_csv(path)
    assert frame.loc[0, "lambda_numeric"] == pytest.approx(2.0, rel=1e-8)
    assert frame.loc[0, "lambda_closed"] == pytest.approx(2.0)
    assert frame.loc[0, "gamma_numeric"] == pytest.approx(0.632456, rel=1e-6)


def test_output_is_byte_identical(tmp_path):
    spec = write(tmp_path, "experiment = remark_example\nalpha = 1, 2\nbeta = 0.1\n")
    run(spec, out=str(tmp_path / "a"))
    run(spec, out=str(tmp_path / "b"), threads=3)
    first = (tmp_path / "a" / "remark_example.csv").read_bytes()
    assert first == (tmp_path / "b" / "remark_example.csv").read_bytes()


def test_empty_spec_exits_with_input_error(tmp_path):
    out = tmp_path / "out"
    assert run(write(tmp_path, ""), out=str(out)) == EXIT_INPUT
    assert not out.exists()


def test_missing_spec_file(tmp_path):
    assert run(str(tmp_path / "missing.spec"), out=str(tmp_path)) == EXIT_INPUT


def test_threshold_scan_reaches_one(tmp_path):
    spec = write(tmp_path, "experiment = threshold_scan\nbeta = 0.05, 0.1, 0.2\nlabel = scan\n")
    assert main(["run", spec, "--out", str(tmp_path)]) == EXIT_OK
    frame = read_csv(tmp_path / "scan.csv")
    assert np.allclose(frame["lambda_numeric"], 1.0, atol=1e-8)
    for t in ("0.1", "1", "10"):
        assert (frame[f"invariance_t_{t}"] <= 1e-7).all()
    assert not frame["liouville_holds"].any()


def test_custom_chain_and_boundary_suite(tmp_path):
    text = ("[experiment]\nexperiment = custom_chain\nlabel = two_state\nn = 2\nedges = 0:1:1\n"
            "killing = 1, 0\nmass = 1\nmu_minus = 0, 1\n\n"
            "[experiment]\nexperiment = boundary_diag\nh = 0.001\noutput = edge.csv\n")
    assert run(write(tmp_path, text), out=str(tmp_path)) == EXIT_OK
    chain = read_csv(tmp_path / "two_state.csv")
    assert chain.loc[0, "lambda_mu"] == pytest.approx(0.5)
    assert not chain.loc[0, "mp_holds"]
    assert chain.loc[0, "liouville_holds"]
    assert chain.loc[0, "spectral_radius"] == pytest.approx(2.0)

    edge = tmp_path / "edge.csv"
    assert "# limit_consistent: True" in edge.read_text()
    frame = read_csv(edge)
    assert (np.abs(frame["laplace_exit"] - frame["laplace_exit_closed"]) < 1e-6).all()


def test_bad_custom_chain_is_an_input_error(tmp_path):
    text = "experiment = custom_chain\nn = 2\nedges = 0:1:1, 1:0:2\n"
    assert run(write(tmp_path, text), out=str(tmp_path)) == EXIT_INPUT


def test_random_suite_agrees(tmp_path):
    spec = write(tmp_path, "experiment = random_suite\nn_instances = 25\nn_max = 6\nseed = 3\n")
    assert run(spec, out=str(tmp_path)) == EXIT_OK
    frame = read_csv(tmp_path / "random_suite.csv")
    assert frame["agree"].all()
    assert frame["mp_implies_l"].all()
    assert frame["critical_invariant_found"].all()
    assert (frame["duality_error"] <= 1e-8).all()
    assert frame["forward_ok"].all() and frame["converse_ok"].all()


def test_mc_validation_runs(tmp_path):
    spec = write(tmp_path, "experiment = mc_validation\nt = 0.1\nn_paths = 300\ndelta = 1e-3\n"
                           "epsilon = 0.05\nh = 0.05\nseed = 2\n")
    assert run(spec, out=str(tmp_path)) == EXIT_OK
    frame = read_csv(tmp_path / "mc_validation.csv")
    assert list(frame["quantity"]) == ["fk_ground_state", "local_time"]
    assert np.isfinite(frame["estimate"]).all()
    assert (frame["stderr"] > 0).all()
    assert (frame["z_score"].abs() <= 4.0).all()


def test_unwritable_output_exits_with_input_error(tmp_path):
    spec = write(tmp_path, "experiment = remark_example\nalpha = 1.0\nbeta = 0.1\n")
    blocked = tmp_path / "blocked"
    blocked.write_text("not a directory")
    assert run(spec, out=str(blocked)) == EXIT_INPUT


@pytest.mark.parametrize("variable, value", [("CRITICALITY_THREADS", "many"),
                                             ("CRITICALITY_LOG_LEVEL", "loud"),
                                             ("CRITICALITY_BLOCK_SIZE", "0")])
def test_bad_environment_exits_with_input_error(tmp_path, monkeypatch, variable, value):
    spec = write(tmp_path, "experiment = remark_example\nalpha = 1.0\nbeta = 0.1\n")
    monkeypatch.setenv(variable, value)
    assert main(["run", spec, "--out", str(tmp_path)]) == EXIT_INPUT
    assert run(spec, out=str(tmp_path)) == EXIT_INPUT
