import pytest
from pydantic import ValidationError

from src.config import ENVIRONMENT, Settings, get_settings
from src.errors import InputError


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for variable in ENVIRONMENT.values():
        monkeypatch.delenv(variable, raising=False)


def test_defaults():
    settings = get_settings()
    assert settings == Settings()
    assert settings.threads == 1
    assert settings.seed is None
    assert settings.block_size == 16384


def test_environment_values_are_parsed(monkeypatch):
    monkeypatch.setenv("CRITICALITY_OUT_DIR", "/tmp/criticality")
    monkeypatch.setenv("CRITICALITY_THREADS", "3")
    monkeypatch.setenv("CRITICALITY_SEED", "7")
    monkeypatch.setenv("CRITICALITY_LOG_LEVEL", "debug")
    monkeypatch.setenv("CRITICALITY_BLOCK_SIZE", "512")
    settings = get_settings()
    assert settings.out_dir == "/tmp/criticality"
    assert settings.threads == 3
    assert settings.seed == 7
    assert settings.log_level == "DEBUG"
    assert settings.block_size == 512


def test_blank_values_keep_defaults(monkeypatch):
    monkeypatch.setenv("CRITICALITY_SEED", "  ")
    monkeypatch.setenv("CRITICALITY_THREADS", "")
    settings = get_settings()
    assert settings.seed is None
    assert settings.threads == 1


@pytest.mark.parametrize("variable, value", [("CRITICALITY_THREADS", "many"),
                                             ("CRITICALITY_THREADS", "0"),
                                             ("CRITICALITY_SEED", "1.5"),
                                             ("CRITICALITY_LOG_LEVEL", "loud"),
                                             ("CRITICALITY_BLOCK_SIZE", "-4")])
def test_invalid_values_name_the_variable(monkeypatch, variable, value):
    monkeypatch.setenv(variable, value)
    with pytest.raises(InputError) as info:
        get_settings()
    assert variable in str(info.value)


def test_settings_are_frozen():
    with pytest.raises(ValidationError):
        Settings().threads = 4
