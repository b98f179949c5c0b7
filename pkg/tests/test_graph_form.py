import math

import numpy as np
import pytest

from src.errors import (InputError, MarkedPointOffGrid, NonPositiveMass, NonSymmetricInput,
                        UnsupportedDimension)
from src.graph_form import (build_graph_form, build_grid_form, build_radial_form,
                            effective_conductance, path_graph)


def test_energy_matches_matrix():
    form = build_graph_form(3, [(0, 1, 2.0), (1, 2, 0.5)], [0.3, 0.0, 1.0], [1.0, 2.0, 0.5])
    u = np.array([1.0, -2.0, 0.5])
    a = form.energy_matrix().toarray()
    assert np.allclose(a, a.T)
    assert form.energy(u) == pytest.approx(u @ a @ u)


def test_duplicate_edges():
    form = build_graph_form(2, [(0, 1, 1.5), (1, 0, 1.5)], [0.0, 0.0], [1.0, 1.0])
    assert form.edge_w.tolist() == [1.5]
    with pytest.raises(NonSymmetricInput):
        build_graph_form(2, [(0, 1, 1.0), (1, 0, 2.0)], [0.0, 0.0], [1.0, 1.0])


def test_invalid_inputs():
    with pytest.raises(NonPositiveMass):
        build_graph_form(2, [(0, 1, 1.0)], [0.0, 0.0], [1.0, 0.0])
    with pytest.raises(InputError):
        build_graph_form(2, [(0, 1, -1.0)], [0.0, 0.0], [1.0, 1.0])
    with pytest.raises(InputError):
        build_graph_form(2, [(0, 1, 1.0)], [-1.0, 0.0], [1.0, 1.0])


def test_reducible_graph_is_flagged():
    form = build_graph_form(3, [(0, 1, 1.0)], [1.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    assert not form.irreducible
    assert not form.is_transient
    assert path_graph(3, killing=[1.0, 0.0, 0.0]).is_transient


def test_free_grid_places_marked_points():
    form, grid = build_grid_form(-5.0, 5.0, 0.05, boundary="free", marked_points=(-1.0, 1.0))
    assert form.n == 201
    assert grid.nodes[grid.index_of(1.0)] == 1.0
    assert grid.nodes[grid.index_of(-1.0)] == -1.0
    assert form.mass[0] == pytest.approx(0.025)
    assert float(np.sum(form.mass)) == pytest.approx(10.0)
    assert not np.any(form.killing)


def test_grid_step_is_snapped():
    form, grid = build_grid_form(0.0, 1.0, 0.3, marked_points=(0.5,))
    assert grid.h == pytest.approx(0.25)
    assert grid.requested_h == 0.3
    assert grid.index_of(0.5) == 2


def test_marked_point_outside_interval():
    with pytest.raises(MarkedPointOffGrid):
        build_grid_form(0.0, 1.0, 0.1, marked_points=(2.0,))
    _, grid = build_grid_form(0.0, 1.0, 0.25)
    with pytest.raises(MarkedPointOffGrid):
        grid.index_of(0.3)


def test_absorbing_ends_become_killing():
    form, grid = build_grid_form(0.0, 1.0, 0.25, boundary="absorbing")
    assert np.allclose(grid.nodes, [0.25, 0.5, 0.75])
    assert np.allclose(form.killing, [2.0, 0.0, 2.0])
    assert np.allclose(form.mass, 0.25)


def test_radial_grid():
    form, grid = build_radial_form(3, 10.0, 0.1, outer="exterior")
    assert grid.kind == "radial"
    assert grid.nodes[grid.index_of(1.0)] == 1.0
    assert form.killing[-1] == pytest.approx(20.0 * math.pi)
    assert form.is_transient
    assert float(np.sum(form.mass)) == pytest.approx(4.0 / 3.0 * math.pi * 1000.0, rel=1e-3)

    free, _ = build_radial_form(3, 10.0, 0.1)
    assert not free.is_transient
    with pytest.raises(UnsupportedDimension):
        build_radial_form(2, 10.0, 0.1)


def test_effective_conductance_of_series_edges():
    assert effective_conductance(path_graph(3), 0, 2) == pytest.approx(0.5)
    assert effective_conductance(path_graph(2, weight=3.0), 0, 1) == pytest.approx(3.0)


def _grid_free():
    return build_grid_form(-2.0, 2.0, 0.25, boundary="free")[0]


def _grid_absorbing():
    return build_grid_form(0.0, 1.0, 0.1, boundary="absorbing")[0]


def _radial_exterior():
    return build_radial_form(3, 5.0, 0.25, outer="exterior")[0]


def _radial_absorbing():
    return build_radial_form(4, 3.0, 0.25, outer="absorbing")[0]


@pytest.mark.parametrize("builder", [_grid_free, _grid_absorbing, _radial_exterior, _radial_absorbing])
def test_energy_and_mass_symmetry_of_built_forms(builder):
    form = builder()
    u = np.random.default_rng(8).standard_normal(form.n)
    a = form.energy_matrix().toarray()
    assert form.energy(u) == pytest.approx(u @ a @ u, rel=1e-12)
    generator = form.generator().toarray()
    assert form.energy(u) == pytest.approx(-float(np.sum(form.mass * u * (generator @ u))), rel=1e-12)
    weighted = form.mass[:, None] * generator
    assert np.allclose(weighted, weighted.T, rtol=0.0, atol=1e-12 * np.max(np.abs(weighted)))


def test_absorbing_interval_spectrum():
    form, _ = build_grid_form(0.0, 1.0, 0.01, boundary="absorbing")
    root = np.sqrt(form.mass)
    symmetric = form.energy_matrix().toarray() / root[:, None] / root[None, :]
    assert np.linalg.eigvalsh(symmetric)[0] == pytest.approx(math.pi ** 2 / 2.0, rel=1e-3)
