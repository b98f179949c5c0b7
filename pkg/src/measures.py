"""Signed measures on grid state spaces and Kato / Green-tightness diagnostics."""

import logging
from typing import Callable, List, Sequence, Union

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import splu, spsolve

from src.errors import InputError, NegativeDensity, NumericalError, RecurrentForm, SingularResolvent
from src.models import (DirichletForm, Grid1D, MeasureSource, SignedMeasure, frozen_array,
                        unit_sphere_area)

logger = logging.getLogger(__name__)

KATO_BOUND_RTOL = 1e-9

DensityValues = Union[float, Sequence[float], np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _signed(mass: np.ndarray, sign: str, source: MeasureSource) -> SignedMeasure:
    if sign not in ("plus", "minus"):
        raise InputError(f"sign must be 'plus' or 'minus', got {sign!r}")
    zero = np.zeros_like(mass)
    plus, minus = (mass, zero) if sign == "plus" else (zero, mass)
    return SignedMeasure(plus=frozen_array(plus), minus=frozen_array(minus), provenance=[source])


def atom(location: float, weight: float, grid: Grid1D, sign: str = "plus") -> SignedMeasure:
    """Point mass `weight` at the grid node sitting at `location`"""
    if not weight > 0:
        raise InputError(f"atom weight must be positive, got {weight}")
    mass = np.zeros(grid.nodes.size)
    mass[grid.index_of(location)] = weight
    return _signed(mass, sign, MeasureSource(kind="atom", sign=sign, location=location, weight=weight))


def density(values: DensityValues, form: DirichletForm, sign: str = "plus") -> SignedMeasure:
    """Lumped density: mass value(x) * m(x) at each state"""
    if callable(values):
        if form.labels is None:
            raise InputError("a density function needs a form with node coordinates")
        values = values(np.asarray(form.labels))
    values = np.broadcast_to(np.asarray(values, dtype=float), (form.n,))
    if np.any(values < 0):
        raise NegativeDensity("density values must be nonnegative for a measure part")
    return _signed(values * form.mass, sign, MeasureSource(kind="density", sign=sign))


def sphere_measure(grid: Grid1D, gamma: float = 1.0, sign: str = "minus") -> SignedMeasure:
    """gamma times the surface measure of the unit sphere, placed at the node r = 1"""
    if grid.kind != "radial" or grid.dimension is None:
        raise InputError("sphere measure needs a radial grid")
    return atom(1.0, gamma * unit_sphere_area(grid.dimension), grid, sign=sign)


def _measure_vector(form: DirichletForm, measure_part) -> np.ndarray:
    mu = np.asarray(measure_part, dtype=float)
    if mu.shape != (form.n,):
        raise InputError("measure part must have one entry per state")
    if np.any(mu < 0):
        raise NegativeDensity("measure part must be nonnegative")
    return mu


def kato_diagnostic(form: DirichletForm, measure_part, alpha_list: Sequence[float]) -> np.ndarray:
    """sup_x G_alpha mu(x) for each alpha, with G_alpha mu = (alpha I - L)^{-1}(mu/m).

    Since alpha I - L = diag(1/m)(alpha diag(m) + A), this is (alpha diag(m) + A)^{-1} mu.
    Each value is checked against ||G_alpha mu|| <= sum(mu) / (alpha min m).
    """
    mu = _measure_vector(form, measure_part)
    energy = form.energy_matrix()
    total = float(np.sum(mu))
    values = []
    for alpha in alpha_list:
        if not alpha > 0:
            raise SingularResolvent(f"resolvent needs alpha > 0, got {alpha}")
        if not np.any(mu):
            values.append(0.0)
            continue
        potential = spsolve((energy + sparse.diags(alpha * form.mass)).tocsc(), mu)
        value = float(np.max(np.abs(potential)))
        bound = total / (alpha * float(np.min(form.mass)))
        if value > bound * (1.0 + KATO_BOUND_RTOL):
            raise NumericalError(f"resolvent solve at alpha={alpha:g} gives {value:.6g} above the bound {bound:.6g}")
        values.append(value)
    return np.array(values)


def green_tight_diagnostic(form: DirichletForm, measure_part,
                           compact_sequence: Sequence[Sequence[int]]) -> np.ndarray:
    """Tail potentials sup_x sum_{y not in K} G(x,y) mu(y) along increasing sets K"""
    if not form.is_transient:
        raise RecurrentForm("Green operator needs killing on every component")
    mu = _measure_vector(form, measure_part)
    lu = splu(form.energy_matrix().tocsc())
    tails = []
    for subset in compact_sequence:
        outside = mu.copy()
        outside[np.asarray(list(subset), dtype=np.int64)] = 0.0
        tails.append(float(np.max(lu.solve(outside))) if np.any(outside) else 0.0)
    return np.array(tails)


def balls(grid: Grid1D, radii: Sequence[float]) -> List[np.ndarray]:
    """Node index sets {r <= R} for each R"""
    return [np.flatnonzero(np.abs(grid.nodes) <= radius + 1e-12) for radius in radii]
