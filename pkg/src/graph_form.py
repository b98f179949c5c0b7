"""Builders for finite symmetric Dirichlet forms.

Three families: arbitrary weighted graphs, equispaced grids discretizing
1/2 D(u,u) = 1/2 int u'^2 dx on an interval, and radial grids discretizing
1/2 int |grad u|^2 dx on R^d for rotationally invariant data.
"""

import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import spsolve

from src.errors import (InputError, MarkedPointOffGrid, NonPositiveMass, NonSymmetricInput,
                        UnsupportedDimension)
from src.models import DirichletForm, Grid1D, frozen_array, unit_sphere_area

logger = logging.getLogger(__name__)

BOUNDARY_KINDS = ("free", "absorbing")
OUTER_KINDS = ("free", "absorbing", "exterior")
MAX_GRID_NODES = 2_000_000
_SNAP_TOL = 1e-9

Edge = Tuple[int, int, float]


def build_graph_form(n: int, edges: Iterable[Edge], killing: Sequence[float],
                     mass: Sequence[float], labels: Optional[Sequence[float]] = None) -> DirichletForm:
    """Validate a weighted graph with killing and masses into a DirichletForm"""
    if n <= 0:
        raise InputError("state count must be positive")
    killing = np.asarray(killing, dtype=float)
    mass = np.asarray(mass, dtype=float)
    if killing.shape != (n,) or mass.shape != (n,):
        raise InputError(f"killing and mass need exactly {n} entries")
    if np.any(~np.isfinite(killing)) or np.any(killing < 0):
        raise InputError("killing weights must be finite and nonnegative")
    if np.any(~np.isfinite(mass)) or np.any(mass <= 0):
        raise NonPositiveMass("reference masses must be strictly positive")

    weights: Dict[Tuple[int, int], float] = {}
    for x, y, w in edges:
        x, y, w = int(x), int(y), float(w)
        if not (0 <= x < n and 0 <= y < n):
            raise InputError(f"edge ({x}, {y}) has an index out of range")
        if not math.isfinite(w) or w < 0:
            raise InputError(f"edge ({x}, {y}) has invalid weight {w}")
        if x == y:
            if w != 0:
                raise InputError(f"self-loop at {x} must have zero weight")
            continue
        key = (min(x, y), max(x, y))
        if key in weights and weights[key] != w:
            raise NonSymmetricInput(f"edge {key} given with conflicting weights {weights[key]} and {w}")
        weights[key] = w

    keys = sorted(k for k, w in weights.items() if w > 0)
    edge_x = np.array([k[0] for k in keys], dtype=np.int64)
    edge_y = np.array([k[1] for k in keys], dtype=np.int64)
    edge_w = np.array([weights[k] for k in keys], dtype=float)

    form = DirichletForm(
        n=n,
        edge_x=frozen_array(edge_x, dtype=np.int64),
        edge_y=frozen_array(edge_y, dtype=np.int64),
        edge_w=frozen_array(edge_w),
        killing=frozen_array(killing),
        mass=frozen_array(mass),
        labels=None if labels is None else frozen_array(labels),
    )
    count, _ = form.components()
    if count > 1:
        logger.warning(f"graph has {count} connected components; theorems are not claimed for it")
    return form.model_copy(update={"irreducible": count == 1})


def _snap_step(left: float, right: float, h: float, marked: Sequence[float]) -> Tuple[float, int]:
    """Largest step <= h putting both ends and every marked point on a node"""
    length = right - left
    first = max(1, math.ceil(length / h - _SNAP_TOL))
    for count in range(first, MAX_GRID_NODES):
        step = length / count
        offsets = [(p - left) / step for p in marked]
        if all(abs(o - round(o)) <= _SNAP_TOL * max(1.0, abs(o)) for o in offsets):
            return step, count
        if count > 1000 * first:
            break
    raise MarkedPointOffGrid(f"cannot place marked points {list(marked)} on a grid with step <= {h}")


def _normalize_boundary(boundary: Union[str, Sequence[str]]) -> Tuple[str, str]:
    if isinstance(boundary, str):
        boundary = (boundary, boundary)
    boundary = tuple(boundary)
    if len(boundary) != 2 or any(b not in BOUNDARY_KINDS for b in boundary):
        raise InputError(f"boundary must be one of {BOUNDARY_KINDS} per end, got {boundary}")
    return boundary


def build_grid_form(left: float, right: float, h: float,
                    boundary: Union[str, Sequence[str]] = "free",
                    marked_points: Sequence[float] = ()) -> Tuple[DirichletForm, Grid1D]:
    """Discretize 1/2 int u'^2 dx on [left, right].

    Neighbor conductance 1/(2h), node mass h (h/2 at free ends). An absorbing end
    removes its boundary node; the neighbor keeps the edge to it as killing 1/(2h).
    """
    if not left < right:
        raise InputError("left must be smaller than right")
    if h <= 0:
        raise InputError("grid step must be positive")
    boundary = _normalize_boundary(boundary)
    marked = [float(p) for p in marked_points]
    for p in marked:
        if not left <= p <= right:
            raise MarkedPointOffGrid(f"marked point {p} lies outside [{left}, {right}]")

    step, count = _snap_step(left, right, h, marked)
    if step < h * (1 - _SNAP_TOL):
        logger.info(f"grid step snapped from {h} to {step}")
    coords = left + step * np.arange(count + 1)
    coords[-1] = right
    for p in marked:
        coords[int(round((p - left) / step))] = p

    conductance = 1.0 / (2.0 * step)
    mass = np.full(count + 1, step)
    killing = np.zeros(count + 1)
    keep = np.ones(count + 1, dtype=bool)
    for end, (node, inner) in zip(boundary, ((0, 1), (count, count - 1))):
        if end == "free":
            mass[node] = step / 2.0
        else:
            keep[node] = False
            killing[inner] += conductance

    for p in marked:
        if not keep[int(round((p - left) / step))]:
            raise MarkedPointOffGrid(f"marked point {p} sits on an absorbing end")
    kept = np.flatnonzero(keep)
    if kept.size == 0:
        raise InputError("grid has no interior nodes")

    edges = [(i, i + 1, conductance) for i in range(kept.size - 1)]
    form = build_graph_form(kept.size, edges, killing[kept], mass[kept], labels=coords[kept])
    grid = Grid1D(left=left, right=right, h=step, requested_h=h, boundary=boundary,
                  nodes=frozen_array(coords[kept]))
    return form, grid


def build_radial_form(dimension: int, r_max: float, h: float,
                      outer: str = "free") -> Tuple[DirichletForm, Grid1D]:
    """Radial reduction of 1/2 int |grad u|^2 on R^d, nodes r = h, 2h, ..., r_max.

    The origin is a free end (first node at r = h). The outer end is free,
    absorbing, or 'exterior': killing 1/2 s_d (d-2) r_max^{d-2} at the last node,
    which is the energy of the harmonic continuation u(r_max) (r_max/r)^{d-2}.
    """
    if dimension < 3:
        raise UnsupportedDimension(f"radial forms need d >= 3 (transient case), got {dimension}")
    if r_max <= 1:
        raise InputError("r_max must exceed 1")
    if h <= 0 or h > 1:
        raise InputError("radial step must lie in (0, 1]")
    if outer not in OUTER_KINDS:
        raise InputError(f"outer boundary must be one of {OUTER_KINDS}")

    step = 1.0 / math.ceil(1.0 / h - _SNAP_TOL)
    count = math.ceil(r_max / step - _SNAP_TOL)
    radii = step * np.arange(1, count + 1)
    radii[int(round(1.0 / step)) - 1] = 1.0
    s_d = unit_sphere_area(dimension)
    p = dimension - 1

    mids = 0.5 * (radii[:-1] + radii[1:])
    conductance = s_d * mids ** p / (2.0 * step)
    mass = s_d * radii ** p * step
    killing = np.zeros(count)
    if outer == "absorbing":
        killing[-2] = conductance[-1]
        radii, mass, killing, conductance = radii[:-1], mass[:-1], killing[:-1], conductance[:-1]
    else:
        mass[-1] /= 2.0
        if outer == "exterior":
            killing[-1] = 0.5 * s_d * (dimension - 2) * radii[-1] ** (dimension - 2)

    edges = [(i, i + 1, c) for i, c in enumerate(conductance)]
    form = build_graph_form(radii.size, edges, killing, mass, labels=radii)
    grid = Grid1D(left=step, right=float(radii[-1]), h=step, requested_h=h, boundary=("free", outer),
                  nodes=frozen_array(radii), kind="radial", dimension=dimension)
    if outer == "free":
        logger.debug("radial form with free outer boundary is recurrent; use outer='exterior' for transience")
    return form, grid


def effective_conductance(form: DirichletForm, a: int, b: int) -> float:
    """Effective conductance between states a and b (killing ignored)"""
    if a == b:
        raise InputError("effective conductance needs two distinct states")
    w = form.conductance_matrix()
    laplacian = (sparse.diags(np.asarray(w.sum(axis=1)).ravel()) - w).tocsr()
    free = np.setdiff1d(np.arange(form.n), [a, b])
    u = np.zeros(form.n)
    u[a] = 1.0
    if free.size:
        rhs = -laplacian[free][:, [a]].toarray().ravel()
        u[free] = np.atleast_1d(spsolve(laplacian[free][:, free].tocsc(), rhs))
    return float((laplacian @ u)[a])


def path_graph(n: int, weight: float = 1.0, killing: Optional[List[float]] = None) -> DirichletForm:
    """Unit-mass path 0 - 1 - ... - (n-1)"""
    killing = [0.0] * n if killing is None else killing
    return build_graph_form(n, [(i, i + 1, weight) for i in range(n - 1)], killing, [1.0] * n)
