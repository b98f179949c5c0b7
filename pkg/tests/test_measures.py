import math

import numpy as np
import pytest

from src.errors import NegativeDensity, RecurrentForm, SingularResolvent
from src.graph_form import build_grid_form, build_radial_form, path_graph
from src.measures import atom, balls, density, green_tight_diagnostic, kato_diagnostic, sphere_measure
from src.models import SignedMeasure
from src.principles import random_transient_instance


def test_atom_sits_on_its_node():
    form, grid = build_grid_form(-2.0, 2.0, 0.5, marked_points=(1.0,))
    mu = atom(1.0, 0.7, grid, sign="minus")
    assert mu.minus[grid.index_of(1.0)] == 0.7
    assert mu.minus.sum() == pytest.approx(0.7)
    assert not np.any(mu.plus)
    assert mu.provenance[0].kind == "atom"


def test_density_is_lumped_against_mass():
    form, _ = build_grid_form(0.0, 1.0, 0.25)
    mu = density(2.0, form)
    assert np.allclose(mu.plus, 2.0 * form.mass)
    curve = density(lambda x: x ** 2, form, sign="minus")
    assert np.allclose(curve.minus, form.labels ** 2 * form.mass)
    with pytest.raises(NegativeDensity):
        density(-1.0, form)


def test_sphere_measure_weight():
    _, grid = build_radial_form(3, 5.0, 0.1)
    sigma = sphere_measure(grid, gamma=1.5)
    assert sigma.minus[grid.index_of(1.0)] == pytest.approx(1.5 * 4.0 * math.pi)


def test_signed_measure_algebra():
    _, grid = build_grid_form(-2.0, 2.0, 0.5)
    mu = atom(-1.0, 1.0, grid) - atom(-1.0, 0.25, grid)
    assert mu.plus[grid.index_of(-1.0)] == 1.0
    assert mu.minus[grid.index_of(-1.0)] == 0.25
    canonical = mu.canonical()
    assert canonical.plus[grid.index_of(-1.0)] == pytest.approx(0.75)
    assert not np.any(canonical.minus)


def test_kato_diagnostic_matches_resolvent_density():
    # G_alpha(0, 0) = 1 / sqrt(2 alpha) for 1/2 d^2/dx^2 on the line
    form, grid = build_grid_form(-10.0, 10.0, 0.01, marked_points=(0.0,))
    mu = atom(0.0, 1.0, grid).plus
    values = kato_diagnostic(form, mu, [1.0, 100.0])
    assert values[0] == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-3)
    assert values[1] == pytest.approx(1.0 / math.sqrt(200.0), rel=1e-2)
    assert values[1] < values[0]
    with pytest.raises(SingularResolvent):
        kato_diagnostic(form, mu, [0.0])


def test_green_tight_tails_vanish():
    form, grid = build_grid_form(-4.0, 4.0, 0.1, boundary="absorbing")
    mu = density(1.0, form).plus
    tails = green_tight_diagnostic(form, mu, balls(grid, [1.0, 2.0, 3.0, 4.0]))
    assert np.all(np.diff(tails) <= 1e-12)
    assert tails[-1] == 0.0
    with pytest.raises(RecurrentForm):
        green_tight_diagnostic(path_graph(3), np.ones(3), [[0]])


def test_jordan_decomposition_is_idempotent():
    mu = SignedMeasure.from_parts([1.0, 0.3, 0.0, 2.5], [0.25, 0.5, 0.2, 2.5])
    once = mu.canonical()
    assert np.array_equal(once.net, mu.net)
    assert not np.any(np.minimum(once.plus, once.minus))
    twice = once.canonical()
    assert np.array_equal(twice.plus, once.plus)
    assert np.array_equal(twice.minus, once.minus)


@pytest.mark.parametrize("alphas", [[0.1, 1.0, 10.0], [0.5, 50.0, 5000.0]])
def test_kato_values_respect_crude_bound(rng, alphas):
    for _ in range(10):
        form = random_transient_instance(rng, n_max=8).form
        mu = rng.uniform(0.0, 2.0, form.n)
        values = kato_diagnostic(form, mu, alphas)
        bounds = mu.sum() / (np.array(alphas) * form.mass.min())
        assert np.all(values <= bounds * (1.0 + 1e-9))
        assert np.all(np.diff(values) <= 1e-15)


def test_green_tight_tails_decrease_strictly_on_radial_grid():
    form, grid = build_radial_form(3, 10.0, 0.1, outer="exterior")
    mu = density(1.0, form).plus
    tails = green_tight_diagnostic(form, mu, balls(grid, [1.0, 2.0, 4.0, 8.0]))
    assert np.all(tails > 0.0)
    assert np.all(np.diff(tails) < 0.0)
