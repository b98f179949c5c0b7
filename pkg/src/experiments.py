"""Experiment catalogue: parameter records and the pipeline that runs them."""

import logging
import math
from typing import Annotated, Any, Callable, Dict, List, Optional, Tuple, Type

import numpy as np
import pandas as pd
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PositiveFloat, model_validator

from src.config import VERSION, Settings, get_settings
from src.errors import InputError
from src.graph_form import build_graph_form, build_grid_form
from src.measures import atom
from src.models import ContinuumProblem1D, ExperimentReport, ExperimentSpec, SignedMeasure
from src.montecarlo import (discretize, estimate_local_time, expected_local_time, remark_problem,
                            simulate_fk, simulate_fk_with_local_time)
from src.principles import (LP_TOL, check_assumption, check_bounded_below_dual, check_liouville,
                            check_mp, sphere_experiment, random_transient_instance,
                            remark_closed_form, verify_witness)
from src.semigroup import (SymmetricPropagator, boundary_class_diagnostic, fk_apply, gauge_function,
                           green_spectral_radius, interval_exit_laplace, limit_pattern)
from src.spectral import (compute_lambda0, compute_lambda_mu, ground_state_time_changed,
                          lemma_first_report, schrodinger)

logger = logging.getLogger(__name__)

LOCAL_TIME_WALL_SIGMAS = 6.0


def _listify(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


PositiveList = Annotated[List[PositiveFloat], BeforeValidator(_listify)]
NonNegativeList = Annotated[List[Annotated[float, Field(ge=0)]], BeforeValidator(_listify)]
StrList = Annotated[List[str], BeforeValidator(_listify)]


class ExperimentParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RemarkParams(ExperimentParams):
    alpha: PositiveList = [1.0]
    beta: PositiveList = [0.1]
    h: PositiveFloat = 0.05
    half_width: float = Field(default=5.0, gt=1.0)

    @model_validator(mode="after")
    def _pair_lengths(self):
        if len(self.beta) not in (1, len(self.alpha)):
            raise ValueError("beta must be a single value or match the length of alpha")
        return self


class ThresholdParams(ExperimentParams):
    beta: Annotated[List[Annotated[float, Field(gt=0, lt=0.25)]], BeforeValidator(_listify)] = [0.05, 0.1, 0.2]
    alpha: Optional[PositiveList] = None
    h: PositiveFloat = 0.05
    half_width: float = Field(default=5.0, gt=1.0)
    times: PositiveList = [0.1, 1.0, 10.0]

    @model_validator(mode="after")
    def _pair_lengths(self):
        if self.alpha is not None and len(self.alpha) != len(self.beta):
            raise ValueError("alpha must match the length of beta")
        return self


class SphereParams(ExperimentParams):
    d: int = Field(default=3, ge=3)
    gamma: PositiveList = [1.0]
    r_max: float = Field(default=40.0, gt=1.0)
    h: float = Field(default=0.01, gt=0, le=1.0)


class RandomSuiteParams(ExperimentParams):
    n_instances: int = Field(default=500, gt=0)
    n_max: int = Field(default=10, ge=2)


class MonteCarloParams(ExperimentParams):
    alpha: Optional[PositiveFloat] = None
    beta: float = Field(default=0.1, gt=0, lt=0.25)
    x0: float = 0.0
    t: PositiveFloat = 1.0
    n_paths: int = Field(default=100_000, gt=1)
    delta: PositiveFloat = 2.5e-5
    epsilon: PositiveFloat = 0.01
    h: PositiveFloat = 0.01
    half_width: float = Field(default=5.0, gt=1.0)
    local_time_at: float = 0.5


class BoundaryParams(ExperimentParams):
    h: float = Field(default=1e-3, gt=0, lt=0.5)
    x: Annotated[List[Annotated[float, Field(gt=0, lt=1)]], BeforeValidator(_listify)] = [0.5, 0.1, 0.01, 0.001]
    epsilon: NonNegativeList = [0.01, 0.1, 1.0]


class CustomChainParams(ExperimentParams):
    n: int = Field(gt=0)
    edges: StrList = []
    killing: NonNegativeList = [0.0]
    mass: PositiveList = [1.0]
    mu_plus: NonNegativeList = [0.0]
    mu_minus: NonNegativeList = [0.0]

    @model_validator(mode="after")
    def _per_state(self):
        for name in ("killing", "mass", "mu_plus", "mu_minus"):
            if len(getattr(self, name)) not in (1, self.n):
                raise ValueError(f"{name} needs 1 or {self.n} values")
        for edge in self.edges:
            parts = edge.split(":")
            if len(parts) != 3:
                raise ValueError(f"edge {edge!r} is not of the form x:y:w")
            int(parts[0]), int(parts[1]), float(parts[2])
        return self

    def vector(self, name: str) -> np.ndarray:
        return np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (self.n,)).copy()

    def edge_list(self) -> List[tuple]:
        return [(int(x), int(y), float(w)) for x, y, w in (e.split(":") for e in self.edges)]


PARAMS: Dict[str, Type[ExperimentParams]] = {
    "remark_example": RemarkParams,
    "threshold_scan": ThresholdParams,
    "sphere_example": SphereParams,
    "random_suite": RandomSuiteParams,
    "mc_validation": MonteCarloParams,
    "boundary_diag": BoundaryParams,
    "custom_chain": CustomChainParams,
}


def remark_form(alpha: float, beta: float, h: float, half_width: float):
    """alpha delta_{-1} - beta delta_1 on a free-ended grid over [-half_width, half_width]"""
    form, grid = build_grid_form(-half_width, half_width, h, boundary="free", marked_points=(-1.0, 1.0))
    mu = atom(-1.0, alpha, grid, sign="plus") + atom(1.0, beta, grid, sign="minus")
    return schrodinger(form, mu), grid


def critical_alpha(beta: float) -> float:
    return remark_closed_form(1.0, beta)["alpha0"]


class ExperimentPipeline:
    """Runs experiment specs against the numerical engines"""

    def __init__(self, settings: Optional[Settings] = None, threads: Optional[int] = None,
                 seed: Optional[int] = None):
        self.settings = settings or get_settings()
        self.threads = threads or self.settings.threads
        self.seed = seed if seed is not None else self.settings.seed
        self.runners: Dict[str, Callable[[Any, int], Tuple[pd.DataFrame, Dict[str, Any]]]] = {
            "remark_example": self.remark_example,
            "threshold_scan": self.threshold_scan,
            "sphere_example": self.sphere_example,
            "random_suite": self.random_suite,
            "mc_validation": self.mc_validation,
            "boundary_diag": self.boundary_diag,
            "custom_chain": self.custom_chain,
        }

    def resolve_seed(self, spec: ExperimentSpec) -> int:
        """A global seed (command line or environment) overrides the spec's own"""
        if self.seed is not None:
            return self.seed
        return spec.seed if spec.seed is not None else 0

    def run(self, spec: ExperimentSpec) -> ExperimentReport:
        try:
            params = PARAMS[spec.experiment](**spec.params)
        except ValueError as e:
            raise InputError(f"{spec.label}: {e}") from e
        seed = self.resolve_seed(spec)
        logger.info(f"Running {spec.experiment} ({spec.label})")
        frame, metadata = self.runners[spec.experiment](params, seed)
        metadata = {"version": VERSION, "experiment": spec.experiment, "label": spec.label,
                    "seed": seed, **metadata}
        return ExperimentReport(experiment=spec.experiment, label=spec.label, frame=frame,
                                metadata=metadata)

    def remark_example(self, params: RemarkParams, seed: int):
        betas = params.beta * len(params.alpha) if len(params.beta) == 1 else params.beta
        rows = []
        grid_h = params.h
        for alpha, beta in zip(params.alpha, betas):
            sform, grid = remark_form(alpha, beta, params.h, params.half_width)
            grid_h = grid.h
            result = compute_lambda_mu(sform)
            closed = remark_closed_form(alpha, beta)
            lam0 = compute_lambda0(sform).value
            rows.append({
                "alpha": alpha,
                "beta": beta,
                "lambda_numeric": result.value,
                "lambda_closed": closed["lambda"],
                "lambda_rel_error": abs(result.value - closed["lambda"]) / closed["lambda"],
                "gamma_numeric": float(result.minimizer[0]),
                "gamma_closed": closed["gamma"],
                "lambda0": lam0,
                # Rayleigh quotient of the constant function, an upper bound for lambda_0 on the truncated grid
                "lambda0_truncation_bound": (alpha - beta) / (2.0 * params.half_width),
                "residual": result.residual,
            })
        return pd.DataFrame(rows), {"h": grid_h, "half_width": params.half_width}

    def threshold_scan(self, params: ThresholdParams, seed: int):
        alphas = params.alpha or [critical_alpha(b) for b in params.beta]
        rows = []
        grid_h = params.h
        for alpha, beta in zip(alphas, params.beta):
            sform, grid = remark_form(alpha, beta, params.h, params.half_width)
            grid_h = grid.h
            result = compute_lambda_mu(sform)
            row = {"beta": beta, "alpha": alpha, "lambda_numeric": result.value,
                   "lambda_minus_one": result.value - 1.0}
            if result.value > 0:
                h = ground_state_time_changed(sform, result)
                propagator = SymmetricPropagator(sform)
                size = float(np.max(np.abs(h)))
                for t in params.times:
                    row[f"invariance_t_{t:g}"] = float(np.max(np.abs(propagator.apply(t, h) - h))) / size
            row["liouville_holds"] = check_liouville(sform).holds
            rows.append(row)
        return pd.DataFrame(rows), {"h": grid_h, "half_width": params.half_width}

    def sphere_example(self, params: SphereParams, seed: int):
        rows = [sphere_experiment(params.d, gamma, params.r_max, params.h) for gamma in params.gamma]
        frame = pd.DataFrame(rows)
        return frame, {"h": float(frame["h"].iloc[0]), "r_max": float(frame["r_max"].iloc[0]),
                       "outer": "exterior"}

    def random_suite(self, params: RandomSuiteParams, seed: int):
        rng = np.random.default_rng(seed)
        rows = []
        for index in range(params.n_instances):
            sform = random_transient_instance(rng, params.n_max)
            lam = compute_lambda_mu(sform).value
            mp = check_mp(sform)
            dual = check_bounded_below_dual(sform)
            liouville = check_liouville(sform)
            rho = green_spectral_radius(sform.form, sform.mu.plus, sform.mu.minus)
            lemma = lemma_first_report(sform)
            critical = schrodinger(sform.form, sform.mu.scaled(minus=lam))
            rows.append({
                "instance": index,
                "n": sform.form.n,
                "full_support": bool(np.all(sform.mu.minus > 0)),
                "lambda_mu": lam,
                "mp_holds": mp.holds,
                "mp_expected": lam > 1.0,
                "agree": mp.holds == (lam > 1.0),
                "witness_verified": (verify_witness(sform, mp.witness, "MP") if mp.witness is not None
                                     else np.nan),
                "dual_agrees": dual.holds == mp.holds,
                "liouville_holds": liouville.holds,
                "mp_implies_l": (not mp.holds) or liouville.holds,
                "critical_invariant_found": not check_liouville(critical).holds,
                "spectral_radius": rho,
                "duality_error": abs(lam * rho - 1.0),
                "lambda0": lemma["lambda0"],
                "poincare_c": lemma["poincare_c"],
                "converse_bound": lemma["converse_bound"],
                "forward_ok": lemma["forward_ok"],
                "converse_ok": lemma["converse_ok"],
            })
        frame = pd.DataFrame(rows)
        mismatches = int((~frame["agree"]).sum())
        if mismatches:
            logger.warning(f"{mismatches} instances where the MP verdict differs from lambda(mu) > 1")
        return frame, {"n_max": params.n_max, "lp_tol": LP_TOL, "mismatches": mismatches}

    def mc_validation(self, params: MonteCarloParams, seed: int):
        alpha = params.alpha or critical_alpha(params.beta)
        problem = remark_problem(alpha, params.beta, params.half_width, params.delta, params.epsilon)
        sform, grid = discretize(problem, params.h)
        ground = ground_state_time_changed(sform)
        exact = float(np.interp(params.x0, grid.nodes, fk_apply(sform, params.t, ground, method="spectral")))
        local_exact = expected_local_time(params.x0, params.local_time_at, params.t)

        def evaluate(x: np.ndarray) -> np.ndarray:
            return np.interp(x, grid.nodes, ground)

        # free-BM local time applies while the wall images of local_time_at are far away
        wall_gap = 2.0 * params.half_width - abs(params.x0) - abs(params.local_time_at)
        shared = (abs(params.local_time_at) < params.half_width
                  and wall_gap >= LOCAL_TIME_WALL_SIGMAS * math.sqrt(params.t))
        if shared:
            fk, local = simulate_fk_with_local_time(problem, params.x0, params.t, params.local_time_at,
                                                    evaluate, params.n_paths, seed, threads=self.threads)
        else:
            fk = simulate_fk(problem, params.x0, params.t, evaluate, params.n_paths, seed, threads=self.threads)
            reach = abs(params.x0) + abs(params.local_time_at) + 10.0 * math.sqrt(params.t)
            free = ContinuumProblem1D(left=-reach, right=reach, delta=params.delta, epsilon=params.epsilon)
            local = estimate_local_time(free, params.x0, params.t, params.local_time_at, params.n_paths,
                                        seed, threads=self.threads)

        rows = []
        for name, estimate, reference in (("fk_ground_state", fk, exact), ("local_time", local, local_exact)):
            rows.append({"quantity": name, "estimate": estimate.value, "stderr": estimate.stderr,
                         "reference": reference,
                         "z_score": (estimate.value - reference) / estimate.stderr if estimate.stderr > 0 else 0.0,
                         "n_paths": estimate.n_paths})
        return pd.DataFrame(rows), {"alpha": alpha, "beta": params.beta, "h": grid.h,
                                    "delta": params.delta, "epsilon": params.epsilon,
                                    "shared_paths": shared}

    def boundary_diag(self, params: BoundaryParams, seed: int):
        form, grid = build_grid_form(0.0, 1.0, params.h, boundary="absorbing", marked_points=params.x)
        states = [grid.index_of(x) for x in params.x]
        table = boundary_class_diagnostic(form, states, params.epsilon)
        frame = table.to_frame()
        frame.insert(3, "laplace_exit_closed", interval_exit_laplace(table.coordinates))
        pattern = limit_pattern(table)
        return frame, {"h": grid.h, "limit_consistent": pattern["consistent"]}

    def custom_chain(self, params: CustomChainParams, seed: int):
        form = build_graph_form(params.n, params.edge_list(), params.vector("killing"), params.vector("mass"))
        mu = SignedMeasure.from_parts(params.vector("mu_plus"), params.vector("mu_minus"))
        sform = schrodinger(form, mu)
        has_minus = bool(np.any(sform.mu.minus > 0))
        assumption = check_assumption(sform)
        mp = check_mp(sform)
        liouville = check_liouville(sform)
        row = {
            "n": form.n,
            "irreducible": form.irreducible,
            "lambda_mu": compute_lambda_mu(sform).value if has_minus else math.inf,
            "lambda0": compute_lambda0(sform).value,
            "assumption_a": assumption.holds,
            "mp_holds": mp.holds,
            "mp_certificate": mp.certificate,
            "liouville_holds": liouville.holds,
            "liouville_certificate": liouville.certificate,
        }
        try:
            gauge = gauge_function(form, sform.mu.plus, sform.mu.minus)
            row.update({"spectral_radius": gauge.spectral_radius, "sup_gauge": gauge.sup_gauge})
        except InputError as e:
            logger.warning(f"gauge skipped: {e}")
        return pd.DataFrame([row]), {"theorem_applicable": assumption.holds}
