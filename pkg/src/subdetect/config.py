import yaml
from pathlib import Path

from .errors import ConfigError

CONFIG_FILE = Path("config.yaml")

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "out_dir": "out",
    "scan_budget": 10_000_000,
    "c": 1.0,
    "trials": 200,
    "p": [100, 200, 400],
    "alpha": [0.4, 0.8],
    "beta": [0.19, 0.4],
    "tests": ["lin", "scan", "max"],
    "delta": 0.1,
    "threshold_level": None,
    "table_atoms_max": 2**25,
}


def local_path(base):
    return base.with_name(base.stem + ".local" + base.suffix)


class Config:
    def __init__(self, path=None):
        self.path = Path(path) if path else CONFIG_FILE
        self.local_path = local_path(self.path)
        self.data = dict(DEFAULTS)
        self.load()

    def _read(self, path):
        try:
            with open(path, "r") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a mapping of key: value pairs")
        return data

    def load(self):
        # Base config, then local overrides
        if self.path.exists():
            self.data.update(self._read(self.path))
        if self.local_path.exists():
            self.data.update(self._read(self.local_path))

    def save(self):
        base_data = self._read(self.path) if self.path.exists() else {}

        # Only keys that differ from the base file go to the local file
        local_data = {}
        for key, value in self.data.items():
            if key not in base_data or base_data[key] != value:
                if key in DEFAULTS and DEFAULTS[key] == value and key not in base_data:
                    continue
                local_data[key] = value

        with open(self.local_path, "w") as f:
            yaml.safe_dump(local_data, f)

    def get(self, key):
        return self.data.get(key)

    def set(self, key, value):
        self.data[key] = value
        self.save()

    def override(self, **values):
        """Apply command-line values that were actually given."""
        for key, value in values.items():
            if value is not None:
                self.data[key] = value
