"""Experiment configuration and unit conversions.

All channel/noise quantities are converted from dB/dBm to linear watts once,
at parse time; the rest of the code works in linear units only.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


SCHEMES = ("proposed", "static", "similarity", "maxpower", "direct", "mse")


@dataclass
class ExperimentConfig:
    # population / training
    devices: int = 50
    clusters: int = 5
    rounds: int = 300
    batch: int = 32
    lipschitz: float = 10.0
    lr: float | None = None          # default 1 / (100 * lipschitz)
    model: str = "softmax"           # softmax | mlp | quadratic
    hidden_width: int = 16

    # data
    data: str = "iid"                # iid | noniid | synthetic (synthetic == iid blobs)
    classes: int = 10
    dim: int = 10
    spread: float = 1.0
    train_samples: int = 5000
    test_samples: int = 1000
    idx_dir: str | None = None       # directory with IDX image/label files

    # channel
    power_w: float = 0.2
    noise_dbm: float = -80.0
    omega0_db: float = -37.0
    kappa: float = 3.5
    ring_inner_m: float = 150.0
    ring_outer_m: float = 200.0

    # clustering (None -> scale-normalized defaults computed from geometry)
    rho: float | None = None
    rho1: float = 0.5
    rho2: float | None = None
    recluster_period: int = 1

    # solver
    solver_max_iter: int = 100
    solver_tol: float = 1e-6

    scheme: str = "proposed"
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.data not in ("iid", "noniid", "synthetic"):
            raise ValueError(f"unknown data mode {self.data!r}")

    def effective_lr(self, lipschitz: float | None = None) -> float:
        """Configured rate, or 1/(100 L) when unset."""
        if self.lr is not None:
            return self.lr
        return 1.0 / (100.0 * (lipschitz if lipschitz is not None else self.lipschitz))

    @property
    def noise_w(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def omega0(self) -> float:
        return db_to_linear(self.omega0_db)

    @property
    def partition_mode(self) -> str:
        return "noniid" if self.data == "noniid" else "iid"


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}

_INT_KEYS = {"devices", "clusters", "rounds", "batch", "hidden_width", "classes",
             "dim", "train_samples", "test_samples", "recluster_period",
             "solver_max_iter", "seed"}
_STR_KEYS = {"model", "data", "idx_dir", "scheme"}


def _coerce(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise KeyError(f"unknown config key {key!r}")
    if raw == "none":
        return None
    if key in _INT_KEYS:
        return int(raw)
    if key in _STR_KEYS:
        return raw
    return float(raw)


def load_config_file(path: str | Path) -> dict:
    """Parse a key=value config file (one pair per line, '#' comments)."""
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        out[key] = _coerce(key, raw)
    return out


def make_config(file_values: dict | None = None, **overrides) -> ExperimentConfig:
    """Build a config from file values overridden by explicit keyword values."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**merged)
