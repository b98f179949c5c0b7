import numpy as np
import pytest

from src.graph_form import build_graph_form
from src.models import SignedMeasure
from src.spectral import schrodinger


def two_state(killing: float = 1.0, minus: float = 0.25, plus: float = 0.0):
    """States 0 - 1 joined by a unit edge, killing at 0, mu- at 1.

    lambda(mu) = killing / (minus (1 + killing)) when plus = 0.
    """
    form = build_graph_form(2, [(0, 1, 1.0)], [killing, 0.0], [1.0, 1.0])
    return schrodinger(form, SignedMeasure.from_parts([plus, 0.0], [0.0, minus]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def subcritical():
    return two_state(1.0, 0.25)


@pytest.fixture
def supercritical():
    return two_state(1.0, 1.0)


@pytest.fixture
def critical():
    return two_state(1.0, 0.5)


@pytest.fixture
def make_two_state():
    return two_state
