"""Experiment configuration: flat key/value files, flags and validation."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, fields
from typing import Dict, List, Mapping, Optional, Tuple

log = logging.getLogger(__name__)

SEED_ENV = "CONTACTLAB_SEED"


class UsageError(ValueError):
    """Bad or missing configuration; carries the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    lam: float
    mu: float
    seed: int
    horizon: Optional[float] = None
    reps: Optional[int] = None
    truncation_L: Optional[int] = None
    grid: Optional[Tuple[float, ...]] = None
    out: str = "out"
    tolerance_k: float = 3.0
    workers: int = 1
    N: Optional[Tuple[int, ...]] = None
    interval: Optional[Tuple[float, float]] = None
    bracket_tol: float = 0.25
    bracket_reps: Optional[int] = None

    def as_items(self) -> List[Tuple[str, str]]:
        """Flat ``(key, value)`` pairs in file syntax; ``None`` values are omitted."""
        items = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            key = _FIELD_KEYS[f.name]
            items.append((key, _format(v)))
        return items

    def echo(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.as_items())


def _format(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# key as written in files and (with a leading --) on the command line
_FIELD_KEYS = {
    "experiment": "exp", "lam": "lambda", "mu": "mu", "seed": "seed", "horizon": "horizon",
    "reps": "reps", "truncation_L": "truncation-L", "grid": "grid", "out": "out",
    "tolerance_k": "tolerance-k", "workers": "workers", "N": "N", "interval": "interval",
    "bracket_tol": "bracket-tol", "bracket_reps": "bracket-reps",
}
KEYS = tuple(_FIELD_KEYS.values())
_KEY_FIELDS = {v: k for k, v in _FIELD_KEYS.items()}


def _number(key, text, kind):
    try:
        v = kind(text)
    except (TypeError, ValueError):
        raise UsageError(key, f"cannot parse {text!r} as {kind.__name__}") from None
    return v


def _list(key, text, kind):
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise UsageError(key, "empty list")
    return tuple(_number(key, p, kind) for p in parts)


def _positive_finite(key, v):
    if not (math.isfinite(v) and v > 0):
        raise UsageError(key, f"must be positive and finite, got {v!r}")
    return v


_CONVERT = {
    "exp": str, "out": str,
    "lambda": float, "mu": float, "horizon": float, "tolerance-k": float, "bracket-tol": float,
    "seed": int, "reps": int, "truncation-L": int, "workers": int, "bracket-reps": int,
}


def _convert(key: str, text) -> object:
    if key == "grid":
        return _list(key, text, float)
    if key == "N":
        return _list(key, text, int)
    if key == "interval":
        v = _list(key, text, float)
        if len(v) != 2:
            raise UsageError(key, "expects two values lo,hi")
        return v
    conv = _CONVERT[key]
    return text if conv is str else _number(key, text, conv)


def read_config_file(path: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    if not os.path.exists(path):
        raise UsageError("config", f"file not found: {path}")
    out: Dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError("config", f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.replace("_", "-") in KEYS:
                key = key.replace("_", "-")
            if key not in KEYS:
                raise UsageError(key, f"unknown key (line {lineno}); known keys: {', '.join(KEYS)}")
            out[key] = value
    return out


# experiments whose results do not involve lambda; it defaults to mu there
LAMBDA_OPTIONAL = ("drift", "duality", "bracket-mu-c", "collapse", "oracle")


def parse_config(path: Optional[str] = None, flags: Optional[Mapping[str, object]] = None,
                 env: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Merge a config file with flag values (flags win) and validate.

    ``flags`` maps file keys to values; ``None`` values count as absent.
    """
    env = os.environ if env is None else env
    raw: Dict[str, object] = dict(read_config_file(path)) if path else {}
    for key, v in (flags or {}).items():
        if key not in KEYS:
            raise UsageError(key, f"unknown key; known keys: {', '.join(KEYS)}")
        if v is None:
            continue
        if key in raw and str(raw[key]) != str(v):
            log.warning("flag --%s=%s overrides config file value %s", key, v, raw[key])
        raw[key] = v
    if "seed" not in raw and env.get(SEED_ENV):
        raw["seed"] = env[SEED_ENV]
    values = {_KEY_FIELDS[k]: _convert(k, v) for k, v in raw.items()}
    for req in ("experiment", "mu", "seed"):
        if req not in values:
            hint = f" (or set {SEED_ENV})" if req == "seed" else ""
            raise UsageError(_FIELD_KEYS[req], f"missing required key{hint}")
    if "lam" not in values:
        if values["experiment"] not in LAMBDA_OPTIONAL:
            raise UsageError("lambda", "missing required key")
        values["lam"] = values["mu"]
    _positive_finite("lambda", values["lam"])
    _positive_finite("mu", values["mu"])
    for key in ("horizon", "tolerance_k", "bracket_tol"):
        if key in values:
            _positive_finite(_FIELD_KEYS[key], values[key])
    for key in ("reps", "workers", "bracket_reps"):
        if key in values and values[key] < 1:
            raise UsageError(_FIELD_KEYS[key], f"must be at least 1, got {values[key]}")
    if values.get("truncation_L") is not None and values["truncation_L"] < 1:
        raise UsageError("truncation-L", "must be at least 1")
    return ExperimentConfig(**values)
