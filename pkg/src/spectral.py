"""Variational problems of Schrodinger forms on finite chains.

lambda(mu) = inf { E^{mu+}(u,u) : sum u^2 mu- = 1 } is solved by eliminating the
states off supp(mu-) through harmonic extension (the Dirichlet principle) and a
dense generalized eigensolve on the support. lambda_0 is the bottom of the
m-weighted spectrum of E^mu itself.
"""

import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sclinalg
import scipy.sparse as sparse
from scipy.sparse.linalg import eigsh, splu

from src.errors import (ConvergenceFailure, DegenerateGroundState, EmptyNegativePart, InputError,
                        SingularReduction)
from src.models import DirichletForm, SchrodingerForm, SignedMeasure, SpectralResult, frozen_array

logger = logging.getLogger(__name__)

DENSE_SUPPORT_LIMIT = 500
DENSE_STATE_LIMIT = 3000
POWER_TOL = 1e-12
POWER_MAX_ITER = 10_000
GENERATOR_RESIDUAL_TOL = 1e-8


def schrodinger(form: DirichletForm, mu: SignedMeasure) -> SchrodingerForm:
    try:
        return SchrodingerForm(form=form, mu=mu)
    except ValueError as e:
        raise InputError(str(e)) from e


def normalize_sign(u: np.ndarray) -> np.ndarray:
    """Positive mean; ties broken by making the first nonzero entry positive"""
    u = np.asarray(u, dtype=float)
    scale = np.max(np.abs(u)) if u.size else 0.0
    if scale == 0:
        return u
    mean = float(np.mean(u))
    if abs(mean) > 1e-14 * scale:
        return u if mean > 0 else -u
    first = u[np.flatnonzero(np.abs(u) > 1e-14 * scale)[0]]
    return u if first > 0 else -u


def _component_flags(form: DirichletForm, potential: np.ndarray,
                     anchors: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-state component labels plus per-component flags (killed, anchored)"""
    count, labels = form.components()
    killed = np.bincount(labels, weights=form.killing + potential, minlength=count) > 0
    anchored = np.bincount(labels, weights=anchors.astype(float), minlength=count) > 0
    return labels, killed, anchored


def _eliminate(matrix: sparse.csr_matrix, inner: np.ndarray, outer: np.ndarray) -> np.ndarray:
    """X = A_OO^{-1} A_OS, so the harmonic extension of v on S is -X v"""
    if inner.size == 0:
        return np.zeros((0, outer.size))
    block = matrix[inner][:, inner].tocsc()
    coupling = matrix[inner][:, outer].toarray()
    try:
        lu = splu(block)
    except RuntimeError as e:
        raise SingularReduction("off-support block of the energy matrix is singular") from e
    return lu.solve(coupling)


def reduced_operator(sform: SchrodingerForm) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Schur complement of A^{mu+} onto S = supp(mu-): returns (S, C, mu-(S))"""
    mu_minus = sform.mu.minus
    support = np.flatnonzero(mu_minus > 0)
    if support.size == 0:
        raise EmptyNegativePart("lambda(mu) needs a nontrivial negative part")
    matrix = sform.matrix("plus")
    labels, killed, anchored = _component_flags(sform.form, sform.mu.plus, mu_minus > 0)
    active = anchored[labels]
    inner = np.flatnonzero(active & (mu_minus == 0))
    elimination = _eliminate(matrix, inner, support)
    schur = matrix[support][:, support].toarray() - matrix[support][:, inner].toarray() @ elimination
    return support, 0.5 * (schur + schur.T), mu_minus[support]


def _finish(sform: SchrodingerForm, value: float, u: np.ndarray, method: str,
            iterations: int = 0) -> SpectralResult:
    mu_minus = sform.mu.minus
    u = u / math.sqrt(float(np.sum(u ** 2 * mu_minus)))
    u = normalize_sign(u)
    residual = sform.matrix("plus") @ u - value * mu_minus * u
    return SpectralResult(value=value, minimizer=frozen_array(u), normalization="mu_minus",
                          residual=float(np.max(np.abs(residual))), iterations=iterations,
                          method=method)


def _deflated(sform: SchrodingerForm, labels, killed, anchored) -> Optional[SpectralResult]:
    """lambda = 0 when a component without killing meets supp(mu-): constants cost nothing"""
    free = np.flatnonzero(anchored & ~killed)
    if free.size == 0:
        return None
    u = (labels == free[0]).astype(float)
    logger.debug("recurrent component meets supp(mu-); returning the constant minimizer")
    return _finish(sform, 0.0, u, method="deflated")


def _power_iteration(matrix: sparse.csr_matrix, weights: np.ndarray, active: np.ndarray) -> Tuple[float, np.ndarray, int]:
    """Inverse iteration v <- A^{-1} (mu- v) on the active states"""
    idx = np.flatnonzero(active)
    block = matrix[idx][:, idx].tocsc()
    lu = splu(block)
    w = weights[idx]
    v = np.ones(idx.size)
    previous = math.inf
    for iteration in range(1, POWER_MAX_ITER + 1):
        v = lu.solve(w * v)
        v /= math.sqrt(float(np.sum(w * v ** 2)))
        value = float(v @ (block @ v))
        if abs(value - previous) <= POWER_TOL * max(abs(value), 1e-300):
            u = np.zeros(weights.size)
            u[idx] = v
            return value, u, iteration
        previous = value
    raise ConvergenceFailure(f"inverse iteration did not converge in {POWER_MAX_ITER} steps")


def compute_lambda_mu(sform: SchrodingerForm, method: str = "auto") -> SpectralResult:
    """Bottom of the spectrum of the time-changed process, lambda(mu).

    method: 'schur' (reduce onto supp(mu-)), 'dense' (full-space generalized
    solve), 'power' (inverse iteration), 'auto' (schur unless the support is large).
    """
    mu_minus = sform.mu.minus
    anchors = mu_minus > 0
    if not np.any(anchors):
        raise EmptyNegativePart("lambda(mu) needs a nontrivial negative part")
    labels, killed, anchored = _component_flags(sform.form, sform.mu.plus, anchors)
    deflated = _deflated(sform, labels, killed, anchored)
    if deflated is not None:
        return deflated

    if method == "auto":
        method = "schur" if np.count_nonzero(anchors) <= DENSE_SUPPORT_LIMIT else "power"
    matrix = sform.matrix("plus")
    active = anchored[labels]

    if method == "schur":
        support, schur, weights = reduced_operator(sform)
        values, vectors = sclinalg.eigh(schur, np.diag(weights), subset_by_index=[0, 0])
        value = max(float(values[0]), 0.0)
        inner = np.flatnonzero(active & ~anchors)
        u = np.zeros(sform.form.n)
        u[support] = vectors[:, 0]
        u[inner] = -_eliminate(matrix, inner, support) @ vectors[:, 0]
        return _finish(sform, value, u, method)
    if method == "dense":
        idx = np.flatnonzero(active)
        values, vectors = sclinalg.eigh(np.diag(mu_minus[idx]), matrix[idx][:, idx].toarray(),
                                        subset_by_index=[idx.size - 1, idx.size - 1])
        u = np.zeros(sform.form.n)
        u[idx] = vectors[:, 0]
        return _finish(sform, 1.0 / float(values[0]), u, method)
    if method == "power":
        value, u, iterations = _power_iteration(matrix, mu_minus, active)
        return _finish(sform, value, u, method, iterations)
    raise InputError(f"unknown lambda(mu) method {method!r}")


def _bottom_mass_weighted(matrix: sparse.csr_matrix, mass: np.ndarray) -> Tuple[float, np.ndarray]:
    """Smallest eigenpair of A u = nu diag(m) u"""
    if mass.size <= DENSE_STATE_LIMIT:
        values, vectors = sclinalg.eigh(matrix.toarray(), np.diag(mass), subset_by_index=[0, 0])
        return float(values[0]), vectors[:, 0]
    scale = sparse.diags(1.0 / np.sqrt(mass))
    values, vectors = eigsh((scale @ matrix @ scale).tocsc(), k=1, which="SA")
    return float(values[0]), vectors[:, 0] / np.sqrt(mass)


def compute_lambda0(sform: SchrodingerForm) -> SpectralResult:
    """lambda_0 = inf { E^mu(u,u) : sum u^2 m = 1 }; may be negative"""
    mass = sform.form.mass
    matrix = sform.matrix("full")
    value, u = _bottom_mass_weighted(matrix, mass)
    u = normalize_sign(u / math.sqrt(float(np.sum(u ** 2 * mass))))
    residual = matrix @ u - value * mass * u
    return SpectralResult(value=value, minimizer=frozen_array(u), normalization="mass",
                          residual=float(np.max(np.abs(residual))), method="dense")


def harmonic_extension(sform: SchrodingerForm, boundary_states: Sequence[int],
                       boundary_values: Sequence[float]) -> np.ndarray:
    """Minimize E^{mu+}(u,u) among u equal to boundary_values on boundary_states.

    Components that never meet the boundary are set to zero.
    """
    boundary = np.asarray(boundary_states, dtype=np.int64)
    values = np.asarray(boundary_values, dtype=float)
    if boundary.size == 0:
        raise InputError("harmonic extension needs at least one boundary state")
    if values.shape != boundary.shape:
        raise InputError("one boundary value per boundary state is required")
    n = sform.form.n
    on_boundary = np.zeros(n, dtype=bool)
    on_boundary[boundary] = True
    labels, _, anchored = _component_flags(sform.form, sform.mu.plus, on_boundary)
    inner = np.flatnonzero(anchored[labels] & ~on_boundary)
    u = np.zeros(n)
    u[boundary] = values
    u[inner] = -_eliminate(sform.matrix("plus"), inner, boundary) @ values
    return u


def ground_state_time_changed(sform: SchrodingerForm,
                              result: Optional[SpectralResult] = None) -> np.ndarray:
    """h with lambda(mu) sum h^2 mu- = 1 and (L - (mu+ - lambda mu-)/m) h = 0"""
    result = compute_lambda_mu(sform) if result is None else result
    if not result.value > 0 or not math.isfinite(result.value):
        raise DegenerateGroundState(f"ground state needs 0 < lambda(mu) < inf, got {result.value}")
    h = np.array(result.minimizer) / math.sqrt(result.value)
    residual = (sform.matrix("plus") @ h - result.value * sform.mu.minus * h) / sform.form.mass
    scale = max(1.0, float(np.max(np.abs(h))))
    if np.max(np.abs(residual)) > GENERATOR_RESIDUAL_TOL * scale * max(1.0, result.value):
        logger.warning(f"ground state generator residual {np.max(np.abs(residual)):.3e} above tolerance")
    return h


def poincare_constant(form: DirichletForm, mu_plus) -> float:
    """Smallest C with sum u^2 m <= C E^{mu+}(u,u); infinite when E^{mu+} has a kernel"""
    matrix = (form.energy_matrix() + sparse.diags(np.asarray(mu_plus, dtype=float))).tocsr()
    value, _ = _bottom_mass_weighted(matrix, form.mass)
    scale = float(np.max(np.abs(matrix.diagonal()) / form.mass))
    return math.inf if value <= 1e-12 * scale else 1.0 / value


def lemma_first_report(sform: SchrodingerForm, tol: float = 1e-9) -> Dict[str, float]:
    """lambda_0 > 0 => lambda(mu) > 1, and the quantitative converse
    lambda_0 >= (lambda - 1) / (C lambda) when sum u^2 m <= C E^{mu+}(u,u)."""
    lam = compute_lambda_mu(sform).value
    lam0 = compute_lambda0(sform).value
    c = poincare_constant(sform.form, sform.mu.plus)
    bound = (lam - 1.0) / (c * lam) if math.isfinite(c) and lam > 0 else math.nan
    forward_ok = not (lam0 > tol) or lam > 1.0
    converse_ok = not (lam > 1.0 and math.isfinite(c)) or lam0 >= bound - tol * max(1.0, abs(bound))
    return {"lambda_mu": lam, "lambda0": lam0, "poincare_c": c, "converse_bound": bound,
            "forward_ok": forward_ok, "converse_ok": converse_ok}
