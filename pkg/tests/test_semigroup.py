import numpy as np
import pytest

from src.errors import ConservativeChain, InputError, RecurrentPositivePart
from src.graph_form import build_graph_form, build_grid_form, path_graph
from src.models import SignedMeasure
from src.semigroup import (boundary_class_diagnostic, check_assumption_A, fk_apply, gauge_function,
                           green_spectral_radius, interval_exit_laplace, interval_survival,
                           limit_pattern, survival_iterates)
from src.spectral import compute_lambda_mu, schrodinger


@pytest.fixture
def killed_chain():
    form = build_graph_form(4, [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (0, 3, 0.3)],
                            [0.2, 0.0, 0.0, 0.1], [1.0, 2.0, 0.5, 1.5])
    return schrodinger(form, SignedMeasure.from_parts([0.0, 0.4, 0.0, 0.1], [0.0, 0.0, 0.3, 0.0]))


def test_methods_agree(killed_chain):
    f = np.array([1.0, -0.5, 2.0, 0.3])
    expm = fk_apply(killed_chain, 0.7, f)
    assert fk_apply(killed_chain, 0.7, f, method="spectral") == pytest.approx(expm, rel=1e-9)

    positive = schrodinger(killed_chain.form, killed_chain.mu.positive_part())
    assert fk_apply(positive, 0.7, f, method="uniformization") == pytest.approx(
        fk_apply(positive, 0.7, f), rel=1e-9, abs=1e-12)
    with pytest.raises(InputError):
        fk_apply(killed_chain, 0.7, f, method="uniformization")


def test_semigroup_is_mass_symmetric(killed_chain):
    m = killed_chain.form.mass
    f = np.array([1.0, 0.0, -1.0, 2.0])
    g = np.array([0.5, 1.0, 1.0, -0.2])
    left = np.sum(m * f * fk_apply(killed_chain, 1.3, g))
    right = np.sum(m * g * fk_apply(killed_chain, 1.3, f))
    assert left == pytest.approx(right, rel=1e-10)


def test_trivial_times_and_conservation():
    sform = schrodinger(path_graph(4), SignedMeasure.zero(4))
    ones = np.ones(4)
    assert fk_apply(sform, 0.0, ones) == pytest.approx(ones)
    assert fk_apply(sform, 5.0, ones) == pytest.approx(ones)
    with pytest.raises(InputError):
        fk_apply(sform, -1.0, ones)


def test_gauge_two_state(make_two_state):
    sform = make_two_state(1.0, 0.25)
    report = gauge_function(sform.form, sform.mu.plus, sform.mu.minus)
    assert report.gaugeable
    assert report.spectral_radius == pytest.approx(0.5)
    assert report.gauge == pytest.approx([1.5, 2.0])
    assert report.sup_gauge == pytest.approx(2.0)


def test_duality_with_lambda(killed_chain):
    lam = compute_lambda_mu(killed_chain).value
    rho = green_spectral_radius(killed_chain.form, killed_chain.mu.plus, killed_chain.mu.minus)
    assert lam * rho == pytest.approx(1.0, rel=1e-8)


def test_gauge_is_infinite_beyond_threshold(make_two_state):
    sform = make_two_state(1.0, 1.0)
    report = gauge_function(sform.form, sform.mu.plus, sform.mu.minus)
    assert not report.gaugeable
    assert report.gauge is None
    assert report.spectral_radius == pytest.approx(2.0)


def test_gauge_needs_killing():
    with pytest.raises(RecurrentPositivePart):
        gauge_function(path_graph(3), np.zeros(3), np.array([0.0, 1.0, 0.0]))


@pytest.mark.parametrize("method", ["spectral", "iterate"])
def test_assumption_a(method):
    killed = path_graph(3, killing=[1.0, 0.0, 0.0])
    assert check_assumption_A(killed, np.zeros(3), method=method).holds

    free = path_graph(3)
    report = check_assumption_A(free, np.zeros(3), method=method)
    assert not report.holds
    assert report.h_limit == pytest.approx(np.ones(3))
    assert check_assumption_A(free, np.array([0.0, 0.0, 0.5]), method=method).holds

    split = build_graph_form(3, [(0, 1, 1.0)], [1.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    report = check_assumption_A(split, np.zeros(3), method=method)
    assert report.h_limit == pytest.approx([0.0, 0.0, 1.0], abs=1e-9)


def test_survival_iterates_decrease():
    iterates = survival_iterates(path_graph(4, killing=[0.5, 0.0, 0.0, 0.0]), np.zeros(4))
    for previous, current in zip(iterates, iterates[1:]):
        assert np.all(current <= previous + 1e-12)
    assert np.max(iterates[-1]) < 1e-10


def test_boundary_diagnostic_on_unit_interval():
    form, grid = build_grid_form(0.0, 1.0, 1e-3, boundary="absorbing",
                                 marked_points=(0.5, 0.1, 0.01, 0.001))
    states = [grid.index_of(x) for x in (0.5, 0.1, 0.01, 0.001)]
    table = boundary_class_diagnostic(form, states, [0.01, 0.1, 1.0])
    assert np.max(np.abs(table.laplace_exit - interval_exit_laplace(table.coordinates))) < 1e-6
    assert table.survival[0, 1] == pytest.approx(interval_survival([0.5], 0.1)[0], rel=1e-3)
    pattern = limit_pattern(table)
    assert pattern["exit_to_one"]
    assert pattern["survival_to_zero"] == [True, True, True]
    assert pattern["consistent"]
    assert list(table.to_frame().columns[:3]) == ["state", "x", "laplace_exit"]


def test_boundary_diagnostic_needs_killing():
    with pytest.raises(ConservativeChain):
        boundary_class_diagnostic(path_graph(3), [0], [0.1])


@pytest.mark.parametrize("t,s", [(0.3, 0.4), (1.0, 2.5), (0.05, 7.0)])
def test_semigroup_law(killed_chain, t, s):
    f = np.array([1.0, -0.5, 2.0, 0.3])
    once = fk_apply(killed_chain, t + s, f)
    twice = fk_apply(killed_chain, t, fk_apply(killed_chain, s, f))
    assert twice == pytest.approx(once, rel=1e-9, abs=1e-12)
