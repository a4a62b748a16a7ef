from pathlib import Path

import pytest

from idim import utils
from idim.errors import ConfigError


@pytest.fixture
def fresh_settings():
    utils.settings.cache_clear()
    yield
    utils.settings.cache_clear()


def test_parse_params():
    assert utils.parse_params("low=0, upp=5,by=0.01") == {"low": 0, "upp": 5, "by": 0.01}
    assert utils.parse_params("") == {}
    assert utils.parse_params("a=x", prefix="p_") == {"p_a": "x"}


@pytest.mark.parametrize("bad", ["low", "low=1,upp", "=3"])
def test_parse_params_malformed(bad):
    with pytest.raises(ConfigError, match="key=value"):
        utils.parse_params(bad)


def test_settings_env_overrides_dotenv(tmp_path, monkeypatch, fresh_settings):
    (tmp_path / ".env").write_text("IDIM_THREADS=3\nIDIM_PROGRESS_INTERVAL=0.5\nOTHER=1\n")
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("IDIM_THREADS", "2")
    assert utils.num_threads() == 2
    assert utils.progress_interval() == 0.5
    assert "OTHER" not in utils.settings()


def test_threads_at_least_one(tmp_path, monkeypatch, fresh_settings):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("IDIM_THREADS", "0")
    assert utils.num_threads() == 1


def test_absolute(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert utils.absolute("a/../b.csv") == str(tmp_path.resolve() / "b.csv")
    assert Path(utils.absolute("~")).is_absolute()


def test_optional_njit_keeps_behavior():
    @utils.optional_njit(cache=False)
    def add(a, b):
        return a + b

    assert add(2, 3) == 5
