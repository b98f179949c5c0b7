"""Path-level Feynman-Kac estimation for killed 1D and radial diffusions.

Paths follow the Euler-Maruyama scheme for the generator 1/2 d^2/dx^2 (plus the
radial drift (d-1)/(2r)). Density PCAFs are accumulated by the trapezoidal rule and
atomic PCAFs by occupation time of a window of half-width epsilon, normalized by the
reference measure of the window. Paths are grouped in fixed-size blocks; each block
draws from its own Philox stream keyed by (seed, block index), so results do not
depend on the number of worker threads.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erfc

from src.config import get_settings
from src.errors import BandwidthTooSmall, InputError
from src.graph_form import build_grid_form, build_radial_form
from src.measures import atom, density
from src.models import Atom, ContinuumProblem1D, GaugeLadder, Grid1D, PathEstimate, SchrodingerForm, SignedMeasure
from src.spectral import schrodinger

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]


class PathEngine:
    """Block-parallel stepping of killed paths for one ContinuumProblem1D"""

    def __init__(self, problem: ContinuumProblem1D, threads: Optional[int] = None,
                 block_size: Optional[int] = None):
        if problem.epsilon < math.sqrt(problem.delta):
            raise BandwidthTooSmall(f"bandwidth {problem.epsilon} is below sqrt(delta) = {math.sqrt(problem.delta):.4g}")
        settings = get_settings()
        self.problem = problem
        self.threads = max(1, threads or settings.threads)
        self.block_size = max(1, block_size or settings.block_size)
        self.absorbing = "absorb" in problem.boundary
        # (location, PCAF per unit occupation time, sign)
        self.windows = [(a.location, a.weight / (2.0 * problem.epsilon * float(problem.reference_density(a.location))),
                         a.sign) for a in problem.atoms]

    def check_start(self, x0: float):
        if not self.problem.left < x0 < self.problem.right:
            raise InputError(f"starting point {x0} is not interior to ({self.problem.left}, {self.problem.right})")

    @staticmethod
    def stream(seed: int, block: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))

    def window_occupation(self, x: np.ndarray, x_new: np.ndarray, location: float, dt: float) -> np.ndarray:
        eps = self.problem.epsilon
        inside = (np.abs(x - location) <= eps).astype(float)
        inside += np.abs(x_new - location) <= eps
        inside *= 0.5 * dt
        return inside

    @staticmethod
    def _density_increment(v: Optional[Evaluator], x: np.ndarray, x_new: np.ndarray, dt: float) -> np.ndarray:
        if v is None:
            return np.zeros(x.size)
        return 0.5 * dt * (v(x) + v(x_new))

    def step(self, x: np.ndarray, dt: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """One Euler step: new positions, absorption flags, and the PCAF increments (dA+, dA-).

        Bridge uniforms are drawn only for absorbing ends.
        """
        problem = self.problem
        x_new = x + math.sqrt(dt) * rng.standard_normal(x.size)
        if problem.domain == "radial":
            x_new += problem.drift(x) * dt
        absorbed = np.zeros(x.size, dtype=bool)
        for kind, end, side in zip(problem.boundary, (problem.left, problem.right), (1.0, -1.0)):
            if kind == "reflect":
                x_new = end + side * np.abs(x_new - end)
                continue
            absorbed |= side * (x_new - end) < 0.0
            if problem.bridge_correction:
                crossing = np.exp(-2.0 * np.abs(x - end) * np.abs(x_new - end) / dt)
                absorbed |= rng.random(x.size) < crossing
        np.clip(x_new, problem.left, problem.right, out=x_new)

        d_plus = self._density_increment(problem.v_plus, x, x_new, dt)
        d_minus = self._density_increment(problem.v_minus, x, x_new, dt)
        for location, scale, sign in self.windows:
            occupation = self.window_occupation(x, x_new, location, dt)
            occupation *= scale
            if sign == "plus":
                d_plus += occupation
            else:
                d_minus += occupation
        return x_new, absorbed, d_plus, d_minus

    def run(self, seed: int, n_paths: int, worker: Callable[[int, np.random.Generator], np.ndarray]) -> np.ndarray:
        """Apply worker(count, rng) to every block and concatenate in block order"""
        if n_paths <= 0:
            raise InputError("n_paths must be positive")
        counts = [min(self.block_size, n_paths - start) for start in range(0, n_paths, self.block_size)]

        def task(block: int) -> np.ndarray:
            return worker(counts[block], self.stream(seed, block))

        if self.threads == 1 or len(counts) == 1:
            parts = [task(b) for b in range(len(counts))]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                parts = list(pool.map(task, range(len(counts))))
        return np.concatenate(parts, axis=0)


def _summarize(samples: np.ndarray, seed: int, problem: ContinuumProblem1D,
               horizon: Optional[float]) -> PathEstimate:
    n = samples.size
    mean = math.fsum(samples) / n
    var = math.fsum((samples - mean) ** 2) / (n - 1) if n > 1 else 0.0
    return PathEstimate(value=mean, stderr=math.sqrt(var / n), n_paths=n, seed=seed,
                        delta=problem.delta, epsilon=problem.epsilon, horizon=horizon)


def _steps(t: float, delta: float) -> int:
    return max(1, int(round(t / delta)))


def _fk_worker(engine: PathEngine, x0: float, n_steps: int, dt: float, f: Evaluator,
               location: Optional[float]) -> Callable[[int, np.random.Generator], np.ndarray]:
    """Per-path samples of exp(-A^mu_t) f(X_t) 1{t < zeta} and, when a location is
    given, of the unweighted window local time there up to t ^ zeta"""
    problem = engine.problem
    scale = 0.0
    if location is not None:
        scale = 1.0 / (2.0 * problem.epsilon * float(problem.reference_density(location)))

    def worker(count: int, rng: np.random.Generator) -> np.ndarray:
        x = np.full(count, float(x0))
        log_weight = np.zeros(count)
        total = np.zeros(count)
        alive = np.ones(count, dtype=bool)
        for _ in range(n_steps):
            x_new, absorbed, d_plus, d_minus = engine.step(x, dt, rng)
            increment = d_minus - d_plus
            if engine.absorbing:
                log_weight += np.where(alive, increment, 0.0)
                alive &= ~absorbed
                if location is not None:
                    total += np.where(alive, engine.window_occupation(x, x_new, location, dt), 0.0)
                x = np.where(alive, x_new, x)
            else:
                log_weight += increment
                if location is not None:
                    total += engine.window_occupation(x, x_new, location, dt)
                x = x_new
        samples = np.empty((count, 2))
        samples[:, 0] = np.where(alive, np.exp(log_weight) * f(x), 0.0)
        samples[:, 1] = scale * total
        return samples

    return worker


def _path_run(problem: ContinuumProblem1D, x0: float, t: float, f: Optional[Evaluator],
              location: Optional[float], n_paths: int, seed: int, threads: Optional[int],
              block_size: Optional[int]) -> np.ndarray:
    if not t > 0:
        raise InputError("time must be positive")
    engine = PathEngine(problem, threads, block_size)
    engine.check_start(x0)
    n_steps = _steps(t, problem.delta)
    dt = t / n_steps
    samples = engine.run(seed, n_paths, _fk_worker(engine, x0, n_steps, dt, f or np.ones_like, location))
    logger.debug(f"{n_paths} paths, {n_steps} steps of {dt:.3g}")
    return samples


def simulate_fk(problem: ContinuumProblem1D, x0: float, t: float, f: Optional[Evaluator] = None,
                n_paths: int = 10_000, seed: int = 0, threads: Optional[int] = None,
                block_size: Optional[int] = None) -> PathEstimate:
    """Estimate p^mu_t f(x0) = E_x0[exp(-A^mu_t) f(X_t); t < zeta]"""
    samples = _path_run(problem, x0, t, f, None, n_paths, seed, threads, block_size)
    return _summarize(samples[:, 0], seed, problem, t)


def simulate_fk_with_local_time(problem: ContinuumProblem1D, x0: float, t: float, location: float,
                                f: Optional[Evaluator] = None, n_paths: int = 10_000, seed: int = 0,
                                threads: Optional[int] = None,
                                block_size: Optional[int] = None) -> Tuple[PathEstimate, PathEstimate]:
    """simulate_fk and estimate_local_time at `location` from one set of paths"""
    samples = _path_run(problem, x0, t, f, location, n_paths, seed, threads, block_size)
    return _summarize(samples[:, 0], seed, problem, t), _summarize(samples[:, 1], seed, problem, t)


def estimate_gauge(problem: ContinuumProblem1D, x0: float, horizons: Sequence[float],
                   n_paths: int = 10_000, seed: int = 0, threads: Optional[int] = None,
                   block_size: Optional[int] = None) -> GaugeLadder:
    """Truncated gauge E^{mu+}_x0[exp(A^{mu-}_{zeta ^ T})] for each horizon T.

    mu+ killing is carried as the weight exp(-A^{mu+}); mass killed during a step
    is credited with exp(A^{mu-}) at the start of that step.
    """
    horizons = sorted(float(h) for h in horizons)
    if not horizons or horizons[0] <= 0:
        raise InputError("horizons must be positive")
    engine = PathEngine(problem, threads, block_size)
    engine.check_start(x0)
    marks = [_steps(h, problem.delta) for h in horizons]
    dt = problem.delta

    def worker(count: int, rng: np.random.Generator) -> np.ndarray:
        x = np.full(count, float(x0))
        log_weight = np.zeros(count)
        killed = np.zeros(count)
        alive = np.ones(count, dtype=bool)
        out = np.zeros((count, 2, len(marks)))
        column = 0
        for step in range(1, marks[-1] + 1):
            x_new, absorbed, d_plus, d_minus = engine.step(x, dt, rng)
            killed += np.where(alive, np.exp(log_weight) * -np.expm1(-d_plus), 0.0)
            log_weight = np.where(alive, log_weight + d_minus - d_plus, log_weight)
            exiting = alive & absorbed
            killed += np.where(exiting, np.exp(log_weight), 0.0)
            alive &= ~absorbed
            x = np.where(alive, x_new, x)
            while column < len(marks) and marks[column] == step:
                surviving = np.where(alive, np.exp(log_weight), 0.0)
                out[:, 0, column] = killed + surviving
                out[:, 1, column] = surviving
                column += 1
        return out

    samples = engine.run(seed, n_paths, worker)
    gauge, survival = [], []
    for j, mark in enumerate(marks):
        gauge.append(_summarize(samples[:, 0, j], seed, problem, mark * dt))
        survival.append(_summarize(samples[:, 1, j], seed, problem, mark * dt))
    return GaugeLadder(gauge=gauge, survival=survival)


def estimate_local_time(problem: ContinuumProblem1D, x0: float, t: float, location: float,
                        n_paths: int = 10_000, seed: int = 0, threads: Optional[int] = None,
                        block_size: Optional[int] = None) -> PathEstimate:
    """E_x0 of the window local time (1/(2 eps m)) int_0^t 1{|X_s - a| <= eps} ds up to t ^ zeta"""
    samples = _path_run(problem, x0, t, None, location, n_paths, seed, threads, block_size)
    return _summarize(samples[:, 1], seed, problem, t)


def expected_local_time(x: float, a: float, t: float) -> float:
    """E_x[l^a_t] = int_0^t p_s(x, a) ds for free BM with generator 1/2 d^2/dx^2"""
    if not t > 0:
        raise InputError("time must be positive")
    d = abs(a - x)
    return math.sqrt(2.0 * t / math.pi) * math.exp(-d * d / (2.0 * t)) - d * float(erfc(d / math.sqrt(2.0 * t)))


def discretize(problem: ContinuumProblem1D, h: float) -> Tuple[SchrodingerForm, Grid1D]:
    """Chain with the same domain, boundary behavior, densities and atoms"""
    sides = {"reflect": "free", "absorb": "absorbing"}
    if problem.domain == "interval":
        form, grid = build_grid_form(problem.left, problem.right, h,
                                     boundary=tuple(sides[b] for b in problem.boundary),
                                     marked_points=[a.location for a in problem.atoms])
    else:
        if problem.boundary[0] != "reflect":
            raise InputError("radial problems reflect at r_min")
        form, grid = build_radial_form(problem.dimension, problem.right, h, outer=sides[problem.boundary[1]])
    mu = SignedMeasure.zero(form.n)
    if problem.v_plus is not None:
        mu = mu + density(problem.v_plus, form, sign="plus")
    if problem.v_minus is not None:
        mu = mu + density(problem.v_minus, form, sign="minus")
    for a in problem.atoms:
        mu = mu + atom(a.location, a.weight, grid, sign=a.sign)
    return schrodinger(form, mu), grid


def remark_problem(alpha: float, beta: float, half_width: float, delta: float, epsilon: float,
                   boundary: Tuple[str, str] = ("reflect", "reflect")) -> ContinuumProblem1D:
    """alpha delta_{-1} - beta delta_1 on [-half_width, half_width]"""
    try:
        return ContinuumProblem1D(left=-half_width, right=half_width, boundary=boundary,
                                  atoms=[Atom(location=-1.0, weight=alpha, sign="plus"),
                                         Atom(location=1.0, weight=beta, sign="minus")],
                                  delta=delta, epsilon=epsilon)
    except ValueError as e:
        raise InputError(str(e)) from e


def ladder(start: float, stop: float, count: int) -> List[float]:
    """Geometric horizon ladder"""
    return [float(t) for t in np.geomspace(start, stop, count)]
