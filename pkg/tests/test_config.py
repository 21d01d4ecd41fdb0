import pytest
import yaml

from subdetect.config import DEFAULTS, Config
from subdetect.errors import ConfigError


def test_defaults_without_files(workdir):
    config = Config()
    assert config.get("seed") == 0
    assert config.get("scan_budget") == 10_000_000
    assert config.get("p") == DEFAULTS["p"]


def test_local_file_overrides_base(workdir):
    (workdir / "config.yaml").write_text("seed: 5\ntrials: 300\n")
    (workdir / "config.local.yaml").write_text("seed: 9\n")
    config = Config()
    assert config.get("seed") == 9
    assert config.get("trials") == 300


def test_set_writes_only_differences(workdir):
    (workdir / "config.yaml").write_text("trials: 300\n")
    config = Config()
    config.set("threads", 4)
    local = yaml.safe_load((workdir / "config.local.yaml").read_text())
    assert local == {"threads": 4}
    assert Config().get("threads") == 4


def test_override_skips_missing_values(workdir):
    config = Config()
    config.override(seed=None, threads=2)
    assert config.get("seed") == 0
    assert config.get("threads") == 2


def test_explicit_path(tmp_path):
    path = tmp_path / "grid.yaml"
    path.write_text("p: [12]\nalpha: [0.3]\n")
    config = Config(path)
    assert config.get("p") == [12]
    assert config.local_path == tmp_path / "grid.local.yaml"


@pytest.mark.parametrize("text", ["seed: [1, 2\n", "- 1\n- 2\n"])
def test_bad_yaml(workdir, text):
    (workdir / "config.yaml").write_text(text)
    with pytest.raises(ConfigError):
        Config()
