"""JSON run configuration.

A config file is a single JSON object.  Every key is optional; unknown keys
are rejected.  Defaults are the standard settings ``eta = 2``, ``rho = 6``,
``Q = I`` with the a9a regularization weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .engine import QMode, SolverConfig
from .estimators import EstimatorKind

__all__ = ["ConfigError", "RunConfig", "PRESETS", "load_config", "parse_config", "preset"]


class ConfigError(ValueError):
    pass


# (lambda1, lambda2) per dataset
PRESETS = {
    "a9a": (1e-4, 1.2e-4),
    "covertype": (1e-4, 1e-6),
    "mnist8m": (1e-3, 1.2e-3),
}


@dataclass(frozen=True)
class RunConfig:
    """Solver settings plus the problem and I/O parameters of one run."""

    algorithm: str = "svrg"
    rho: float = 6.0
    eta: float = 2.0
    q_mode: str = "identity"
    m: int | None = None
    iterations: int = 1000
    seed: int | None = None
    lambda1: float = PRESETS["a9a"][0]
    lambda2: float = PRESETS["a9a"][1]
    graph_threshold: float = 0.5
    data_path: str | None = None
    out_path: str | None = None
    diagnostics: bool = False

    def __post_init__(self):
        try:
            EstimatorKind.parse(self.algorithm)
        except ValueError as e:
            raise ConfigError(f"algorithm: {e}") from None
        try:
            QMode.parse(self.q_mode)
        except ValueError as e:
            raise ConfigError(f"q_mode: {e}") from None
        for k in ("rho", "eta"):
            v = getattr(self, k)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{k}: expected a positive finite number, got {v!r}")
        for k in ("lambda1", "lambda2"):
            v = getattr(self, k)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{k}: expected a non-negative finite number, got {v!r}")
        if not 0 < self.graph_threshold <= 1:
            raise ConfigError(f"graph_threshold: expected a number in (0, 1], got {self.graph_threshold!r}")
        if self.iterations < 0:
            raise ConfigError(f"iterations: expected a non-negative integer, got {self.iterations!r}")
        if self.m is not None and self.m < 1:
            raise ConfigError(f"m: expected a positive integer or null, got {self.m!r}")
        if self.seed is not None and self.seed < 0:
            raise ConfigError(f"seed: expected a non-negative integer, got {self.seed!r}")

    def solver(self, **overrides) -> SolverConfig:
        """The :class:`SolverConfig` for this run (``seed`` must be set)."""
        if self.seed is None:
            raise ConfigError("seed: no seed given (set it in the config or pass --seed)")
        kw = dict(algorithm=self.algorithm, rho=self.rho, eta=self.eta, q_mode=self.q_mode,
                  m=self.m, iterations=self.iterations, seed=self.seed,
                  diagnostics=self.diagnostics)
        kw.update(overrides)
        return SolverConfig(**kw)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


# accepted JSON types per key; bool is excluded from the numeric ones
_SCHEMA = {
    "algorithm": ((str,), "string"),
    "rho": ((int, float), "number"),
    "eta": ((int, float), "number"),
    "q_mode": ((str,), "string"),
    "m": ((int, type(None)), "integer or null"),
    "iterations": ((int,), "integer"),
    "seed": ((int, type(None)), "integer or null"),
    "lambda1": ((int, float), "number"),
    "lambda2": ((int, float), "number"),
    "graph_threshold": ((int, float), "number"),
    "data_path": ((str, type(None)), "string or null"),
    "out_path": ((str, type(None)), "string or null"),
    "diagnostics": ((bool,), "boolean"),
}
assert set(_SCHEMA) == {f.name for f in fields(RunConfig)}


def parse_config(obj, base: RunConfig | None = None) -> RunConfig:
    """Validate a decoded JSON object and merge it over ``base``."""
    if not isinstance(obj, dict):
        raise ConfigError(f"config must be a JSON object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    kw = {}
    for key, val in obj.items():
        types, desc = _SCHEMA[key]
        ok = isinstance(val, types) and not (isinstance(val, bool) and bool not in types)
        if not ok:
            raise ConfigError(f"{key}: expected {desc}, got {type(val).__name__} {val!r}")
        kw[key] = float(val) if float in types and isinstance(val, int) else val
    return replace(base or RunConfig(), **kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    return parse_config(obj)


def preset(name: str, **kw) -> RunConfig:
    """Defaults with the regularization weights of a named dataset."""
    try:
        l1, l2 = PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
    return RunConfig(lambda1=l1, lambda2=l2, **kw)
