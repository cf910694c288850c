"""Run configuration: flat key = value text with dotted section prefixes.

Example::

    mode = skt
    seed = 42
    grid.d = 1
    grid.n = 64
    time.horizon = 1.0
    time.dt = 0.001
    skt.a12 = 0.5

Unknown keys are rejected so typos fail loudly.  Values are plain scalars,
booleans (true/false), or space-separated number lists; matrices use ';'
between rows.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from .errors import UsageError

MODES = (
    "check-petrovskii",
    "solve-linear",
    "solve-nonlinear",
    "skt",
    "lp-calibrate",
    "suite",
)


def parse_config_text(text):
    """key = value lines -> dict[str, str]; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        val = val.strip()
        if not key:
            raise UsageError(f"config line {lineno}: empty key")
        if key in out:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def read_config(path):
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None


def _to_bool(key, val):
    low = val.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise UsageError(f"{key}: expected a boolean, got {val!r}")


def _to_floats(key, val):
    try:
        return [float(tok) for tok in val.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"{key}: expected numbers, got {val!r}") from None


def _to_matrix(key, val):
    rows = [r for r in val.split(";") if r.strip()]
    mat = [_to_floats(key, r) for r in rows]
    if not mat or any(len(r) != len(mat) for r in mat):
        raise UsageError(f"{key}: expected a square matrix (rows split by ';')")
    return np.asarray(mat, dtype=float)


@dataclasses.dataclass
class GridConfig:
    d: int = 1
    n: int = 64


@dataclasses.dataclass
class TimeConfig:
    horizon: float = 1.0
    dt: float = 1e-3
    t_init: Optional[float] = None
    stride: int = 1


@dataclasses.dataclass
class InitConfig:
    kind: str = "standard"  # standard | zero
    base: tuple = (1.0, 1.0)
    amplitude: float = 0.1


@dataclasses.dataclass
class PetrovskiiConfig:
    delta: float = 0.5
    matrix: Optional[np.ndarray] = None
    t_points: int = 50
    samples: int = 0  # >0: randomized family check instead of one matrix
    size: int = 2


@dataclasses.dataclass
class LinearConfig:
    matrix: Optional[np.ndarray] = None
    delta: Optional[float] = None  # enables the energy certificate


@dataclasses.dataclass
class SKTConfig:
    d1: float = 1.0
    d2: float = 1.0
    a11: float = 0.5
    a12: float = 0.5
    a21: float = 0.5
    a22: float = 0.5
    r1: float = 0.0
    r2: float = 0.0
    s11: float = 0.0
    s12: float = 0.0
    s21: float = 0.0
    s22: float = 0.0
    margin: float = 0.05
    box: float = 10.0


@dataclasses.dataclass
class PicardConfig:
    theta_small: float = 0.25
    n_max: int = 50
    tol: float = 1e-9
    t_min: float = 1e-6
    blowup_factor: float = 1e6
    dt_min: float = 1e-8


@dataclasses.dataclass
class LPConfig:
    s: float = 2.0
    n_fields: int = 30


@dataclasses.dataclass
class RunConfig:
    mode: str = "skt"
    seed: int = 0
    threads: int = 0  # 0: leave library threading untouched
    s: float = 2.0  # regularity index used by every solve and norm
    grid: GridConfig = dataclasses.field(default_factory=GridConfig)
    time: TimeConfig = dataclasses.field(default_factory=TimeConfig)
    init: InitConfig = dataclasses.field(default_factory=InitConfig)
    petrovskii: PetrovskiiConfig = dataclasses.field(default_factory=PetrovskiiConfig)
    linear: LinearConfig = dataclasses.field(default_factory=LinearConfig)
    skt: SKTConfig = dataclasses.field(default_factory=SKTConfig)
    picard: PicardConfig = dataclasses.field(default_factory=PicardConfig)
    lp: LPConfig = dataclasses.field(default_factory=LPConfig)


_TOP_KEYS = {"mode": str, "seed": int, "threads": int, "s": float}

_SECTION_FIELDS = {
    "grid": {"d": int, "n": int},
    "time": {"horizon": float, "dt": float, "t_init": float, "stride": int},
    "init": {"kind": str, "base": "floats", "amplitude": float},
    "petrovskii": {"delta": float, "matrix": "matrix", "t_points": int,
                   "samples": int, "size": int},
    "linear": {"matrix": "matrix", "delta": float},
    "skt": {k: float for k in ("d1", "d2", "a11", "a12", "a21", "a22",
                               "r1", "r2", "s11", "s12", "s21", "s22",
                               "margin", "box")},
    "picard": {"theta_small": float, "n_max": int, "tol": float,
               "t_min": float, "blowup_factor": float, "dt_min": float},
    "lp": {"s": float, "n_fields": int},
}


def _convert(key, val, kind):
    if kind is str:
        return val
    if kind is int:
        try:
            return int(val)
        except ValueError:
            raise UsageError(f"{key}: expected an integer, got {val!r}") from None
    if kind is float:
        try:
            return float(val)
        except ValueError:
            raise UsageError(f"{key}: expected a number, got {val!r}") from None
    if kind is bool:
        return _to_bool(key, val)
    if kind == "floats":
        return tuple(_to_floats(key, val))
    if kind == "matrix":
        return _to_matrix(key, val)
    raise UsageError(f"{key}: unsupported kind {kind!r}")


def build_run_config(entries):
    """Typed RunConfig from a parsed key -> string dict; rejects unknown keys."""
    cfg = RunConfig()
    unknown = []
    for key, val in entries.items():
        if "." not in key:
            if key in _TOP_KEYS:
                setattr(cfg, key, _convert(key, val, _TOP_KEYS[key]))
            else:
                unknown.append(key)
            continue
        section, field_name = key.split(".", 1)
        fields = _SECTION_FIELDS.get(section)
        if fields is None or field_name not in fields:
            unknown.append(key)
            continue
        setattr(getattr(cfg, section), field_name,
                _convert(key, val, fields[field_name]))
    if unknown:
        raise UsageError("unknown config keys: " + ", ".join(sorted(unknown)))
    if cfg.mode not in MODES:
        raise UsageError(
            f"mode must be one of {', '.join(MODES)}; got {cfg.mode!r}"
        )
    return cfg


def load_run_config(path=None, text=None, overrides=None):
    """Config from a file or literal text, with CLI-style overrides applied."""
    entries = {}
    if path is not None:
        entries.update(read_config(path))
    if text is not None:
        entries.update(parse_config_text(text))
    for key, val in (overrides or {}).items():
        if val is not None:
            entries[key] = str(val)
    return build_run_config(entries)
