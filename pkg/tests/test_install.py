"""
Check that the scientific stack and every package module import cleanly
"""

import importlib

import pytest


@pytest.mark.parametrize("name", ["numpy", "scipy", "pandas", "pydantic", "dotenv"])
def test_imports(name):
    """Test if all required packages can be imported"""
    assert importlib.import_module(name) is not None


@pytest.mark.parametrize("name", ["src.config", "src.errors", "src.models", "src.graph_form",
                                  "src.measures", "src.spectral", "src.semigroup",
                                  "src.montecarlo", "src.principles", "src.experiments", "src.main"])
def test_package_modules(name):
    assert importlib.import_module(name) is not None
