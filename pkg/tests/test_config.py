import pytest
from pydantic import ValidationError

from fwcomp.config import Settings, config


@pytest.fixture
def restore_options():
    saved = dict(config._options)
    yield
    config._options = saved


def test_defaults():
    settings = Settings()
    assert settings.universe_bound == 2 ** 20
    assert settings.max_negation_atoms == 4096
    assert settings.table_dir is None


def test_environment_overrides_are_read_live(monkeypatch):
    monkeypatch.setenv("FWCOMP_UNIVERSE_BOUND", "64")
    assert config.universe_bound == 64
    monkeypatch.setenv("FWCOMP_TABLE_DIR", "/srv/tables")
    assert str(config.table_dir) == "/srv/tables"
    monkeypatch.delenv("FWCOMP_UNIVERSE_BOUND")
    assert config.get_all_options()["universe_bound"] == config._options["universe_bound"]


def test_set_option_without_persisting(restore_options, monkeypatch):
    monkeypatch.delenv("FWCOMP_UNIVERSE_BOUND", raising=False)
    config.set_option("universe_bound", 128, persist=False)
    assert config.universe_bound == 128


def test_set_option_validates(restore_options):
    with pytest.raises(ValidationError):
        config.set_option("max_negation_atoms", 0, persist=False)


def test_unknown_option():
    with pytest.raises(ValueError, match="Available"):
        config.get_option("api_key")
    with pytest.raises(ValueError):
        config.set_option("api_key", "x", persist=False)
