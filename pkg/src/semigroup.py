"""Exact Feynman-Kac semigroups, gauge functions and Assumption (A) on finite chains.

The Schrodinger generator L - M_{mu/m} equals -diag(1/m) A^mu, which is similar to the
symmetric matrix S = diag(m)^{-1/2} A^mu diag(m)^{-1/2}; every propagator here is
built from S so that m-symmetry holds to rounding.
"""

import logging
import math
from typing import List, Sequence

import numpy as np
import scipy.linalg as sclinalg
import scipy.sparse as sparse
from scipy.sparse.linalg import splu, spsolve
from scipy.stats import poisson

from src.errors import ConservativeChain, InputError, RecurrentPositivePart
from src.models import (AssumptionAReport, BoundaryClassTable, DirichletForm, GaugeReport,
                        SchrodingerForm, SignedMeasure, frozen_array)
from src.spectral import schrodinger

logger = logging.getLogger(__name__)

RHO_TOL = 1e-10
ASSUMPTION_A_TOL = 1e-10
ITERATE_TOL = 1e-12
ITERATE_MAX_DOUBLINGS = 200
UNIFORMIZATION_TAIL = 1e-16


class SymmetricPropagator:
    """p^mu_t for many t from one eigendecomposition of the symmetrized generator"""

    def __init__(self, sform: SchrodingerForm):
        self.mass = np.asarray(sform.form.mass)
        self.root = np.sqrt(self.mass)
        sym = _symmetrized(sform)
        self.values, self.vectors = sclinalg.eigh(sym)

    def apply(self, t: float, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        scaled = _scale_rows(self.root, f)
        decay = np.exp(-t * self.values)
        out = self.vectors @ _scale_rows(decay, self.vectors.T @ scaled)
        return _scale_rows(1.0 / self.root, out)


def _scale_rows(weights: np.ndarray, f: np.ndarray) -> np.ndarray:
    return weights * f if f.ndim == 1 else weights[:, None] * f


def _symmetrized(sform: SchrodingerForm) -> np.ndarray:
    inv_root = 1.0 / np.sqrt(sform.form.mass)
    sym = inv_root[:, None] * sform.matrix("full").toarray() * inv_root[None, :]
    return 0.5 * (sym + sym.T)


def _uniformized(sform: SchrodingerForm, t: float, f: np.ndarray) -> np.ndarray:
    if np.any(sform.mu.net < 0):
        raise InputError("uniformization needs a substochastic generator (mu >= 0)")
    generator = sform.generator()
    rate = float(np.max(-generator.diagonal()))
    if rate == 0:
        return f.copy()
    jump = (sparse.identity(sform.form.n) + generator / rate).tocsr()
    mean = rate * t
    last = int(math.ceil(mean + 12.0 * math.sqrt(mean) + 30.0))
    weights = poisson.pmf(np.arange(last + 1), mean)
    term = f.copy()
    out = weights[0] * term
    for k in range(1, last + 1):
        term = jump @ term
        out = out + weights[k] * term
        if k > mean and weights[k] < UNIFORMIZATION_TAIL:
            break
    return out


def fk_apply(sform: SchrodingerForm, t: float, f, method: str = "expm") -> np.ndarray:
    """p^mu_t f = exp(t (L - M_{mu/m})) f.

    method: 'expm' (scaling-and-squaring Pade on the symmetrized generator),
    'spectral' (eigendecomposition), 'uniformization' (only for mu >= 0).
    """
    if t < 0:
        raise InputError("time must be nonnegative")
    f = np.asarray(f, dtype=float)
    if f.shape[0] != sform.form.n:
        raise InputError("function must have one entry per state")
    if t == 0:
        return f.copy()
    if method == "expm":
        root = np.sqrt(sform.form.mass)
        propagator = sclinalg.expm(-t * _symmetrized(sform))
        return _scale_rows(1.0 / root, propagator @ _scale_rows(root, f))
    if method == "spectral":
        return SymmetricPropagator(sform).apply(t, f)
    if method == "uniformization":
        return _uniformized(sform, t, f)
    raise InputError(f"unknown semigroup method {method!r}")


def _transient_energy(form: DirichletForm, mu_plus: np.ndarray) -> sparse.csr_matrix:
    count, labels = form.components()
    killed = np.bincount(labels, weights=form.killing + mu_plus, minlength=count) > 0
    if not np.all(killed):
        raise RecurrentPositivePart("E^{mu+} has a zero-energy kernel (no killing on some component)")
    return (form.energy_matrix() + sparse.diags(mu_plus)).tocsr()


def green_spectral_radius(form: DirichletForm, mu_plus, mu_minus) -> float:
    """rho(G^{mu+} M_{mu-}) via the symmetric support block mu-^{1/2} G mu-^{1/2}"""
    mu_plus = np.asarray(mu_plus, dtype=float)
    mu_minus = np.asarray(mu_minus, dtype=float)
    matrix = _transient_energy(form, mu_plus)
    support = np.flatnonzero(mu_minus > 0)
    if support.size == 0:
        return 0.0
    rhs = np.zeros((form.n, support.size))
    rhs[support, np.arange(support.size)] = 1.0
    green = splu(matrix.tocsc()).solve(rhs)[support]
    root = np.sqrt(mu_minus[support])
    block = root[:, None] * green * root[None, :]
    return float(sclinalg.eigvalsh(0.5 * (block + block.T))[-1])


def gauge_function(form: DirichletForm, mu_plus, mu_minus) -> GaugeReport:
    """g(x) = E^{mu+}_x[exp(A^{mu-}_zeta)] = (I - G^{mu+} M_{mu-})^{-1} 1 when rho < 1"""
    mu_plus = np.asarray(mu_plus, dtype=float)
    mu_minus = np.asarray(mu_minus, dtype=float)
    matrix = _transient_energy(form, mu_plus)
    rho = green_spectral_radius(form, mu_plus, mu_minus)
    if rho >= 1.0 - RHO_TOL:
        logger.info(f"gauge is infinite: spectral radius {rho:.6g} >= 1")
        return GaugeReport(gauge=None, spectral_radius=rho, gaugeable=False, sup_gauge=math.inf)
    ones = np.ones(form.n)
    gauge = np.atleast_1d(spsolve((matrix - sparse.diags(mu_minus)).tocsc(), matrix @ ones))
    return GaugeReport(gauge=frozen_array(gauge), spectral_radius=rho, gaugeable=True,
                       sup_gauge=float(np.max(gauge)))


def survival_iterates(form: DirichletForm, mu_plus, max_doublings: int = ITERATE_MAX_DOUBLINGS) -> List[np.ndarray]:
    """v_0 = 1, v_k = p^{mu+}_{t_k} 1 with t_1 = 1/max rate and t_{k+1} = 2 t_k.

    Each v_{k+1} = p_{t_k} v_k applies the current kernel to the previous
    iterate, so the sequence is entrywise nonincreasing and reaches the
    t -> infinity limit after logarithmically many steps.
    """
    sform = schrodinger(form, SignedMeasure.from_parts(mu_plus))
    rates = sform.matrix("full").diagonal() / form.mass
    top = float(np.max(rates))
    iterates = [np.ones(form.n)]
    if top == 0:
        return iterates
    kernel = SymmetricPropagator(sform)
    # PSD generator: round-off negatives would blow up at long horizons
    kernel.values = np.maximum(kernel.values, 0.0)
    elapsed = 0.0
    for _ in range(max_doublings):
        dt = elapsed if elapsed > 0 else 1.0 / top
        nxt = np.clip(kernel.apply(dt, iterates[-1]), 0.0, 1.0)
        elapsed += dt
        iterates.append(nxt)
        if np.max(np.abs(nxt - iterates[-2])) <= ITERATE_TOL:
            break
    else:
        logger.warning(f"survival iteration stopped after {max_doublings} doublings without converging")
    return iterates


def check_assumption_A(form: DirichletForm, mu_plus, method: str = "spectral") -> AssumptionAReport:
    """h_limit(x) = lim_t E_x[exp(-A^{mu+}_t); t < zeta]; (A) holds iff h_limit = 0.

    On a finite chain the limit is 1 on components carrying neither killing nor
    mu+ and 0 elsewhere ('spectral'); 'iterate' reaches it by monotone iteration.
    """
    mu_plus = np.asarray(mu_plus, dtype=float)
    if method == "spectral":
        count, labels = form.components()
        killed = np.bincount(labels, weights=form.killing + mu_plus, minlength=count) > 0
        h_limit = (~killed[labels]).astype(float)
        iterations = 0
    elif method == "iterate":
        iterates = survival_iterates(form, mu_plus)
        h_limit = iterates[-1]
        iterations = len(iterates) - 1
    else:
        raise InputError(f"unknown Assumption (A) method {method!r}")
    holds = bool(np.max(np.abs(h_limit)) <= ASSUMPTION_A_TOL)
    return AssumptionAReport(h_limit=frozen_array(h_limit), holds=holds, method=method,
                             iterations=iterations)


def boundary_class_diagnostic(form: DirichletForm, states: Sequence[int],
                              epsilon_list: Sequence[float]) -> BoundaryClassTable:
    """Table of E_x[exp(-zeta)] and P_x(zeta > eps) along a sequence of states.

    E_x[exp(-zeta)] = w solves (I - L) w = k/m, i.e. (diag(m) + A) w = k;
    P_x(zeta > eps) = (exp(eps L) 1)(x).
    """
    if not np.any(np.asarray(form.killing) > 0):
        raise ConservativeChain("boundary diagnostic needs killing or an absorbing end")
    states = np.asarray(states, dtype=np.int64)
    epsilons = np.asarray(epsilon_list, dtype=float)
    if np.any(epsilons < 0):
        raise InputError("epsilon values must be nonnegative")
    system = (form.energy_matrix() + sparse.diags(form.mass)).tocsc()
    laplace_exit = np.atleast_1d(spsolve(system, np.asarray(form.killing, dtype=float)))
    propagator = SymmetricPropagator(schrodinger(form, SignedMeasure.zero(form.n)))
    ones = np.ones(form.n)
    survival = np.column_stack([propagator.apply(eps, ones)[states] for eps in epsilons])
    coords = np.asarray(form.labels)[states] if form.labels is not None else states.astype(float)
    return BoundaryClassTable(states=frozen_array(states, dtype=np.int64), coordinates=frozen_array(coords),
                              laplace_exit=frozen_array(laplace_exit[states]),
                              survival=frozen_array(np.clip(survival, 0.0, 1.0)),
                              epsilons=frozen_array(epsilons))


def limit_pattern(table: BoundaryClassTable, tol: float = 0.05) -> dict:
    """Read the last row of the table as the limit along the sequence:
    E_x[e^{-zeta}] -> 1 must coincide with P_x(zeta > eps) -> 0 for every eps > 0."""
    exit_to_one = bool(abs(table.laplace_exit[-1] - 1.0) <= tol)
    positive = table.epsilons > 0
    survival_to_zero = [bool(s <= tol) for s in table.survival[-1, positive]]
    return {"exit_to_one": exit_to_one, "survival_to_zero": survival_to_zero,
            "consistent": all(s == exit_to_one for s in survival_to_zero)}


def interval_exit_laplace(x, left: float = 0.0, right: float = 1.0) -> np.ndarray:
    """E_x[exp(-zeta)] for BM with generator 1/2 d^2/dx^2 killed on leaving (left, right)"""
    mid = 0.5 * (left + right)
    half = 0.5 * (right - left)
    return np.cosh(math.sqrt(2.0) * (np.asarray(x, dtype=float) - mid)) / math.cosh(math.sqrt(2.0) * half)


def interval_survival(x, t: float, left: float = 0.0, right: float = 1.0, terms: int = 200) -> np.ndarray:
    """P_x(zeta > t) for BM killed on leaving (left, right), by the sine series"""
    length = right - left
    y = (np.asarray(x, dtype=float) - left) / length
    k = np.arange(1, 2 * terms, 2)[:, None]
    series = 4.0 / (k * math.pi) * np.sin(k * math.pi * y[None, :]) * np.exp(-(k * math.pi / length) ** 2 * t / 2.0)
    return series.sum(axis=0)
