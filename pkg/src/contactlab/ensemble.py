"""Poisson event streams of the graphical representation.

Arrows on each directed nearest-neighbour edge are split into a *common*
stream at rate ``min(lam, mu)``, which infects either kind of susceptible
site, and a *residual* stream at rate ``|mu - lam|``, which infects only
recovered sites when ``mu > lam`` and only never-infected sites when
``lam > mu``. Every site also carries a rate-1 stream of recovery marks.

In random mode a stream of rate ``r`` is the superposition of ``floor(r)``
unit-rate layers plus one unit-rate layer thinned to the fractional part.
Layers are keyed by ``(seed, site, stream, layer)``, so the same seed yields
nested arrow sets when a rate is increased.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from . import _engine
from .rng import as_seed

_FRAC_EPS = 1e-12


class Kind(enum.IntEnum):
    COMMON = 0
    RESIDUAL = 1
    RECOVERY = 2


class Direction(enum.IntEnum):
    LEFT = 0
    RIGHT = 1


_KIND_NAMES = {"CommonArrow": Kind.COMMON, "ResidualArrow": Kind.RESIDUAL,
               "RecoveryMark": Kind.RECOVERY}
_DIR_NAMES = {"left": Direction.LEFT, "right": Direction.RIGHT}


@dataclass(frozen=True)
class Params:
    """Infection rates: ``lam`` into never-infected sites, ``mu`` into recovered ones."""

    lam: float
    mu: float

    def __post_init__(self):
        for name in ("lam", "mu"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    @property
    def common_rate(self) -> float:
        return min(self.lam, self.mu)

    @property
    def residual_rate(self) -> float:
        return abs(self.mu - self.lam)

    @property
    def max_rate(self) -> float:
        return max(self.lam, self.mu)

    @property
    def residual_target(self) -> int:
        """State a residual arrow can infect: 0 if ``mu > lam``, else -1."""
        return 0 if self.mu > self.lam else -1

    def as_dict(self):
        return {"lambda": self.lam, "mu": self.mu}


class StreamKey(NamedTuple):
    kind: Kind
    site: int
    direction: Optional[Direction] = None

    @property
    def code(self) -> int:
        if self.kind == Kind.RECOVERY:
            return _engine.RECOVERY_CODE
        return 2 * int(self.kind) + int(self.direction)

    @property
    def target(self) -> int:
        if self.kind == Kind.RECOVERY:
            return self.site
        return self.site - 1 if self.direction == Direction.LEFT else self.site + 1

    @classmethod
    def from_code(cls, site: int, code: int) -> "StreamKey":
        if code == _engine.RECOVERY_CODE:
            return cls(Kind.RECOVERY, site, None)
        return cls(Kind(code // 2), site, Direction(code % 2))

    @classmethod
    def common(cls, site, direction):
        return cls(Kind.COMMON, site, Direction(direction))

    @classmethod
    def residual(cls, site, direction):
        return cls(Kind.RESIDUAL, site, Direction(direction))

    @classmethod
    def recovery(cls, site):
        return cls(Kind.RECOVERY, site, None)


class Event(NamedTuple):
    time: float
    key: StreamKey
    seq: int

    def sort_key(self):
        return (self.time, self.key.site, self.key.code, self.seq)


def _check_key(key: StreamKey) -> StreamKey:
    kind = Kind(key.kind)
    if kind == Kind.RECOVERY:
        if key.direction is not None:
            raise ValueError("recovery marks carry no direction")
        return StreamKey(kind, int(key.site), None)
    if key.direction is None:
        raise ValueError("arrow streams need a direction")
    return StreamKey(kind, int(key.site), Direction(key.direction))


def _layer_plan(rate: float):
    full = int(math.floor(rate))
    frac = rate - full
    if frac < _FRAC_EPS:
        return full, 1.0
    return full + 1, frac


def _check_horizon(horizon):
    if not isinstance(horizon, (int, float)) or not math.isfinite(horizon) or horizon <= 0:
        raise ValueError(f"horizon must be positive and finite, got {horizon!r}")
    return float(horizon)


@dataclass(frozen=True)
class EventEnsemble:
    """One realization of all streams over times ``[0, horizon]``.

    Read-only once built. Use :func:`new_random_ensemble` or
    :func:`new_synthetic_ensemble` rather than the constructor.
    """

    params: Params
    master_seed: int
    horizon: float
    mode: str
    events: tuple = ()
    _args: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rates = [self.params.common_rate] * 2 + [self.params.residual_rate] * 2 + [1.0]
        if self.mode == "random":
            plans = [_layer_plan(r) for r in rates]
            nlayers = np.array([p[0] for p in plans], dtype=np.int64)
            # thinning probability per (stream, layer); only the last layer is thinned
            keep = np.ones((5, max(1, int(nlayers.max()))), dtype=np.float64)
            for code, (n, frac) in enumerate(plans):
                if n > 0:
                    keep[code, n - 1] = frac
            codes = np.empty(0, dtype=np.int64)
            offs = np.zeros(1, dtype=np.int64)
            times = np.empty(0, dtype=np.float64)
            mode = _engine.RANDOM
        elif self.mode == "synthetic":
            nlayers = np.ones(5, dtype=np.int64)
            keep = np.ones((5, 1), dtype=np.float64)
            by_code = {}
            for ev in self.events:
                c = ev.key.site * _engine.N_CODES + ev.key.code
                by_code.setdefault(c, []).append(ev.time)
            sorted_codes = sorted(by_code)
            codes = np.array(sorted_codes, dtype=np.int64)
            offs = np.zeros(len(sorted_codes) + 1, dtype=np.int64)
            flat = []
            for k, c in enumerate(sorted_codes):
                flat.extend(by_code[c])
                offs[k + 1] = len(flat)
            times = np.array(flat, dtype=np.float64)
            mode = _engine.SYNTHETIC
        else:
            raise ValueError(f"unknown ensemble mode {self.mode!r}")
        args = (np.int64(mode), as_seed(self.master_seed), nlayers, keep,
                np.float64(self.horizon), codes, offs, times)
        object.__setattr__(self, "_args", args)

    @property
    def engine_args(self):
        return self._args

    def with_horizon(self, horizon):
        """Same seed over a different horizon; agrees on the overlap."""
        if self.mode != "random":
            raise ValueError("only random ensembles can be re-horizoned")
        return new_random_ensemble(self.params, self.master_seed, horizon)


def new_random_ensemble(params: Params, master_seed: int, horizon: float) -> EventEnsemble:
    if not isinstance(params, Params):
        raise ValueError("params must be a Params instance")
    if isinstance(master_seed, bool) or not isinstance(master_seed, (int, np.integer)):
        raise ValueError(f"master_seed must be an integer, got {master_seed!r}")
    return EventEnsemble(params, int(master_seed), _check_horizon(horizon), "random")


def new_synthetic_ensemble(events: Iterable, horizon: float,
                           params: Params = Params(1.0, 2.0)) -> EventEnsemble:
    """Ensemble serving exactly ``events``.

    ``events`` may hold :class:`Event` objects or ``(time, StreamKey)`` pairs;
    pairs get sequence numbers in order of appearance within their stream.
    Global times must be strictly increasing.
    """
    horizon = _check_horizon(horizon)
    seen = set()
    per_stream = {}
    out = []
    last = -math.inf
    for item in events:
        if isinstance(item, Event):
            time, key, seq = item
        else:
            time, key = item
            seq = None
        key = _check_key(key)
        time = float(time)
        if not math.isfinite(time) or time < 0 or time > horizon:
            raise ValueError(f"event time {time!r} outside [0, {horizon}]")
        if time <= last:
            raise ValueError(f"event times must be strictly increasing (got {time!r} after {last!r})")
        last = time
        count = per_stream.get(key, 0) + 1
        per_stream[key] = count
        if seq is None:
            seq = count
        if (key, seq) in seen:
            raise ValueError(f"duplicate event {key} seq={seq}")
        if seq != count:
            raise ValueError(f"sequence numbers of {key} must run 1, 2, ... in time order")
        seen.add((key, seq))
        out.append(Event(time, key, int(seq)))
    return EventEnsemble(params, 0, horizon, "synthetic", tuple(out))


def _check_window(e: EventEnsemble, t0, t1):
    if not (0 <= t0 <= t1 <= e.horizon):
        raise ValueError(f"window ({t0}, {t1}] outside [0, {e.horizon}]")


def events_for_stream(e: EventEnsemble, key: StreamKey, t0: float, t1: float) -> list:
    """Events of one stream with times in ``(t0, t1]``, in time order."""
    _check_window(e, t0, t1)
    key = _check_key(key)
    if t0 == t1:
        return []
    times = _engine.stream_times(e.engine_args, np.int64(key.site), np.int64(key.code),
                                 np.float64(t1))
    return [Event(float(t), key, k + 1) for k, t in enumerate(times) if t > t0]


def events_in_window(e: EventEnsemble, site_min: int, site_max: int,
                     t0: float, t1: float) -> list:
    """All events whose site (and arrow target) lies in ``[site_min, site_max]``."""
    if site_min > site_max:
        raise ValueError("site_min must not exceed site_max")
    _check_window(e, t0, t1)
    out = []
    if e.mode == "synthetic":
        for ev in e.events:
            if (site_min <= ev.key.site <= site_max and site_min <= ev.key.target <= site_max
                    and t0 < ev.time <= t1):
                out.append(ev)
        return out
    for site in range(site_min, site_max + 1):
        for code in range(_engine.N_CODES):
            key = StreamKey.from_code(site, code)
            if not site_min <= key.target <= site_max:
                continue
            out.extend(events_for_stream(e, key, t0, t1))
    out.sort(key=Event.sort_key)
    return out


def parse_event_lines(lines: Iterable[str]) -> list:
    """Parse ``time kind site direction`` lines; ``#`` starts a comment."""
    items = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ValueError(f"line {lineno}: expected 'time kind site direction'")
        try:
            time = float(parts[0])
            kind = _KIND_NAMES[parts[1]]
            site = int(parts[2])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"line {lineno}: cannot parse {line!r}") from exc
        direction = None
        if kind != Kind.RECOVERY:
            if len(parts) != 4 or parts[3] not in _DIR_NAMES:
                raise ValueError(f"line {lineno}: arrows need direction left or right")
            direction = _DIR_NAMES[parts[3]]
        elif len(parts) == 4 and parts[3] not in ("-", "none"):
            raise ValueError(f"line {lineno}: recovery marks take no direction")
        items.append((time, StreamKey(kind, site, direction)))
    return items


def load_synthetic(path, horizon: float, params: Params = Params(1.0, 2.0)) -> EventEnsemble:
    text = Path(path).read_text().splitlines()
    return new_synthetic_ensemble(parse_event_lines(text), horizon, params)


def format_event_lines(events: Sequence[Event]) -> str:
    names = {v: k for k, v in _KIND_NAMES.items()}
    rows = []
    for ev in events:
        d = "-" if ev.key.direction is None else ev.key.direction.name.lower()
        rows.append(f"{ev.time!r} {names[ev.key.kind]} {ev.key.site} {d}")
    return "\n".join(rows) + "\n"
