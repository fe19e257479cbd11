"""Three-state and contact processes driven by an :class:`EventEnsemble`.

All processes replayed on one ensemble are coupled: they read the same
arrows and recovery marks, so pathwise comparisons hold sample by sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import _engine
from .ensemble import Event, EventEnsemble, Kind, Params

ARROW_POLICIES = ("all_arrows", "common_only")


def default_depth(mu: float, t_end: float) -> int:
    """Half-line truncation depth used when none is given."""
    return int(math.ceil((mu + 1.0) * t_end)) + 20


# ------------------------------------------------------------ configurations

@dataclass(frozen=True)
class SiteSet:
    """Sorted set of sites; ``halfline`` marks ``-L..0`` on the lattice ``[-L, inf)``."""

    sites: Tuple[int, ...]
    halfline: Optional[int] = field(default=None, compare=False)

    @classmethod
    def of(cls, sites: Iterable[int] = (), halfline: Optional[int] = None) -> "SiteSet":
        return cls(tuple(sorted({int(s) for s in sites})), halfline)

    @classmethod
    def half_line(cls, depth: int) -> "SiteSet":
        if depth < 0:
            raise ValueError("truncation depth must be nonnegative")
        return cls(tuple(range(-depth, 1)), int(depth))

    def __iter__(self):
        return iter(self.sites)

    def __len__(self):
        return len(self.sites)

    def __contains__(self, x):
        return x in set(self.sites)

    def __bool__(self):
        return bool(self.sites)

    def max(self):
        return self.sites[-1] if self.sites else -math.inf

    def min(self):
        return self.sites[0] if self.sites else math.inf

    def issubset(self, other) -> bool:
        return set(self.sites) <= set(other)


@dataclass(frozen=True)
class Configuration:
    """Three-state field with every site outside ``states`` equal to -1."""

    states: Tuple[Tuple[int, int], ...]
    halfline: Optional[int] = field(default=None, compare=False)

    @classmethod
    def from_mapping(cls, states: Mapping[int, int],
                     halfline: Optional[int] = None) -> "Configuration":
        pairs = []
        for site, v in sorted(states.items()):
            if v not in (-1, 0, 1):
                raise ValueError(f"site {site}: state must be -1, 0 or 1, got {v!r}")
            if v != -1:
                pairs.append((int(site), int(v)))
        return cls(tuple(pairs), halfline)

    @classmethod
    def eta0(cls) -> "Configuration":
        return cls(((0, 1),))

    @classmethod
    def eta_n(cls, n: int) -> "Configuration":
        if n < 0:
            raise ValueError("N must be nonnegative")
        return cls(tuple((x, 1) for x in range(-n, n + 1)))

    @classmethod
    def eta_bar(cls, depth: int) -> "Configuration":
        """Sites ``-depth..0`` infected on the lattice ``[-depth, inf)``."""
        if depth < 0:
            raise ValueError("truncation depth must be nonnegative")
        return cls(tuple((x, 1) for x in range(-depth, 1)), int(depth))

    @classmethod
    def eta_y(cls, y: int, depth: int) -> "Configuration":
        """Sites ``-depth..y`` infected on the lattice ``[-depth, inf)``."""
        return cls(tuple((x, 1) for x in range(-depth, y + 1)), int(depth))

    @classmethod
    def eta_h(cls, states: Mapping[int, int]) -> "Configuration":
        """Configuration with a finite nonempty infected set and no -1 inside its hull."""
        c = cls.from_mapping(states)
        inf = c.infected()
        if not inf:
            raise ValueError("configuration has no infected site")
        for x in range(inf.min(), inf.max() + 1):
            if c[x] == -1:
                raise ValueError(f"site {x} is -1 inside the infected hull")
        return c

    def __getitem__(self, x: int) -> int:
        return self.as_dict().get(x, -1)

    def as_dict(self) -> Dict[int, int]:
        return dict(self.states)

    def infected(self) -> SiteSet:
        return SiteSet.of((x for x, v in self.states if v == 1), self.halfline)

    @property
    def lo(self):
        return self.states[0][0] if self.states else 0

    @property
    def hi(self):
        return self.states[-1][0] if self.states else 0

    def leq(self, other: "Configuration") -> bool:
        a, b = self.as_dict(), other.as_dict()
        return all(a.get(x, -1) <= b.get(x, -1) for x in set(a) | set(b))


# ------------------------------------------------------------- single events

def apply_event(c: Configuration, ev: Event, params: Params) -> Configuration:
    """Configuration right after ``ev`` (pure reference implementation)."""
    s = c.as_dict()
    key = ev.key
    x = key.site
    if s.get(x, -1) != 1:
        return c
    if key.kind == Kind.RECOVERY:
        s[x] = 0
        return Configuration.from_mapping(s, c.halfline)
    y = key.target
    if c.halfline is not None and y < -c.halfline:
        return c
    sy = s.get(y, -1)
    if key.kind == Kind.COMMON:
        hit = sy != 1
    else:
        hit = sy == params.residual_target and params.residual_rate > 0
    if not hit:
        return c
    s[y] = 1
    return Configuration.from_mapping(s, c.halfline)


def apply_contact_event(a: SiteSet, ev: Event, arrow_policy: str = "all_arrows") -> SiteSet:
    key = ev.key
    if key.site not in a:
        return a
    if key.kind == Kind.RECOVERY:
        return SiteSet.of(set(a) - {key.site}, a.halfline)
    if key.kind == Kind.RESIDUAL and arrow_policy == "common_only":
        return a
    if a.halfline is not None and key.target < -a.halfline:
        return a
    return SiteSet.of(set(a) | {key.target}, a.halfline)


def replay_three_state(init: Configuration, events: Sequence[Event], params: Params,
                       t: float = math.inf) -> Configuration:
    """Slow reference replay of ``events`` with times up to ``t``."""
    c = init
    for ev in events:
        if ev.time > t:
            break
        c = apply_event(c, ev, params)
    return c


# ------------------------------------------------------------------ records

@dataclass
class TrajectoryRecord:
    """Summary of one process sampled on a time grid.

    ``r`` is the rightmost infected site (``-inf`` when none), ``x`` its running
    maximum, ``l``/``x_min`` the leftmost analogues.
    """

    process: str
    times: np.ndarray
    r: np.ndarray
    x: np.ndarray
    l: np.ndarray
    x_min: np.ndarray
    n_infected: np.ndarray
    extinction_time: Optional[float]
    t_end: float
    event_count: int
    snapshots: Optional[list] = None

    @property
    def extinct(self) -> np.ndarray:
        return self.n_infected == 0

    @property
    def extinct_by_end(self) -> bool:
        return self.extinction_time is not None

    def infected_at(self, g: int) -> SiteSet:
        snap = self.snapshots[g]
        if isinstance(snap, SiteSet):
            return snap
        return snap.infected()

    def csv_rows(self, rep: int = 0) -> List[dict]:
        rows = []
        for g, t in enumerate(self.times):
            empty = self.n_infected[g] == 0
            rows.append({
                "rep": rep,
                "t": float(t),
                "r": "" if empty else int(self.r[g]),
                "x": "" if not math.isfinite(self.x[g]) else int(self.x[g]),
                "n_infected": int(self.n_infected[g]),
                "extinct": int(empty),
            })
        return rows

    def to_json(self) -> dict:
        def ints(a):
            return [None if not math.isfinite(v) else int(v) for v in a]

        out = {
            "process": self.process,
            "t_end": self.t_end,
            "times": [float(t) for t in self.times],
            "r": ints(self.r),
            "x": ints(self.x),
            "l": ints(self.l),
            "x_min": ints(self.x_min),
            "n_infected": [int(v) for v in self.n_infected],
            "extinct_by_end": self.extinct_by_end,
            "extinction_time": self.extinction_time,
            "event_count": self.event_count,
        }
        if self.snapshots is not None:
            out["snapshots"] = [
                list(s.sites) if isinstance(s, SiteSet) else [list(p) for p in s.states]
                for s in self.snapshots
            ]
        return out


TRAJECTORY_CSV_COLUMNS = ("rep", "t", "r", "x", "n_infected", "extinct")


# -------------------------------------------------------------- engine glue

_KIND_CODES = {"three_state": _engine.THREE, "all_arrows": _engine.CONTACT_ALL,
               "common_only": _engine.CONTACT_COMMON}
_REL_CODES = {"leq": _engine.REL_LEQ, "subset": _engine.REL_SUBSET, "equal": _engine.REL_EQUAL}


def _as_states(init) -> Dict[int, int]:
    if isinstance(init, Configuration):
        return init.as_dict()
    if isinstance(init, SiteSet):
        return {x: 1 for x in init}
    raise TypeError(f"expected Configuration or SiteSet, got {type(init).__name__}")


def _check_grid(grid, start, t_end, horizon):
    if not (0 <= start <= t_end):
        raise ValueError(f"need 0 <= start_time <= t_end, got {start}, {t_end}")
    if t_end > horizon:
        raise ValueError(f"t_end {t_end} beyond ensemble horizon {horizon}")
    g = np.asarray(list(grid), dtype=np.float64)
    if g.size and (np.any(np.diff(g) < 0) or g[0] < start or g[-1] > t_end):
        raise ValueError("sample grid must be nondecreasing and within [start_time, t_end]")
    return g


def _lattice_of(inits, lattice):
    """Left lattice end of every process, and the common right end.

    A half-line initial condition cuts its own process at its depth; other
    processes take the shallowest cut present.
    """
    if lattice is not None:
        return [int(lattice[0])] * len(inits), int(lattice[1])
    cuts = [-init.halfline for init in inits if init.halfline is not None]
    default = max(cuts) if cuts else -_engine.POS
    return [default if init.halfline is None else -init.halfline for init in inits], _engine.POS


@dataclass
class CoupledRun:
    records: List[TrajectoryRecord]
    violations: Dict[str, int]
    first_violation: Dict[str, float]


def run_coupled(processes: Sequence[Tuple[str, object]], e: EventEnsemble, t_end: float,
                sample_grid: Sequence[float] = (), *, checks: Sequence[Tuple[int, int, str]] = (),
                start_time: float = 0.0, lattice: Optional[Tuple[int, int]] = None,
                snapshots: bool = False) -> CoupledRun:
    """Replay several processes on one ensemble.

    ``processes`` holds ``(policy, init)`` pairs where policy is
    ``"three_state"``, ``"all_arrows"`` or ``"common_only"``. Each check
    ``(p, q, rel)`` is evaluated after every event; ``rel`` is ``"leq"``
    (sitewise order of states), ``"subset"`` (infected sets) or ``"equal"``.
    """
    grid = _check_grid(sample_grid, start_time, t_end, e.horizon)
    kinds = np.array([_KIND_CODES[k] for k, _ in processes], dtype=np.int64)
    inits = [init for _, init in processes]
    state_maps = [_as_states(init) for init in inits]
    plat_lo, lat_hi = _lattice_of(inits, lattice)
    lat_lo = min(plat_lo)
    for sm, p_lo in zip(state_maps, plat_lo):
        for x in sm:
            if not p_lo <= x <= lat_hi:
                raise ValueError(f"initial site {x} outside the lattice")
    sites = [x for sm in state_maps for x in sm]
    lo, hi = (min(sites), max(sites)) if sites else (0, 0)
    init_arr = np.full((len(processes), hi - lo + 1), -1, dtype=np.int8)
    for p, sm in enumerate(state_maps):
        for x, v in sm.items():
            init_arr[p, x - lo] = v
    cp = np.array([c[0] for c in checks], dtype=np.int64)
    cq = np.array([c[1] for c in checks], dtype=np.int64)
    cr = np.array([_REL_CODES[c[2]] for c in checks], dtype=np.int64)
    rate = max(e.params.max_rate, 1.0)
    margin = 32 + int(math.ceil(rate * (t_end - start_time)))
    while True:
        cap_lo = max(lo - margin, lat_lo - 1)
        cap_hi = min(hi + margin, lat_hi + 1)
        out = _engine.run_lockstep(
            e.engine_args, kinds, np.int8(e.params.residual_target), init_arr,
            np.int64(lo), np.float64(start_time), np.float64(t_end),
            np.array(plat_lo, dtype=np.int64), np.int64(lat_hi), np.int64(cap_lo), np.int64(cap_hi),
            grid, snapshots, cp, cq, cr)
        if out[0] == _engine.OK:
            break
        margin *= 2
    _, rec, ext, n_events, viol, viol_t, snap_off, snap_site, snap_state = out
    records = []
    K = len(processes)
    for p, (policy, init) in enumerate(processes):
        snaps = None
        if snapshots:
            snaps = []
            for g in range(grid.size):
                a, b = snap_off[g * K + p], snap_off[g * K + p + 1]
                if policy == "three_state":
                    snaps.append(Configuration(
                        tuple(zip(snap_site[a:b].tolist(), snap_state[a:b].tolist())),
                        init.halfline))
                else:
                    snaps.append(SiteSet(tuple(snap_site[a:b].tolist()), init.halfline))
        et = ext[p]
        records.append(TrajectoryRecord(
            process=policy,
            times=grid.copy(),
            r=_finite_or(rec[0, p], -math.inf),
            x=_finite_or(rec[1, p], -math.inf),
            l=_finite_or(rec[2, p], math.inf),
            x_min=_finite_or(rec[3, p], math.inf),
            n_infected=rec[4, p].copy(),
            extinction_time=None if et == math.inf else (start_time if et == -math.inf else float(et)),
            t_end=float(t_end),
            event_count=int(n_events),
            snapshots=snaps,
        ))
    names = [f"{checks[c][0]}-{checks[c][2]}-{checks[c][1]}" for c in range(len(checks))]
    return CoupledRun(records, dict(zip(names, viol.tolist())),
                      dict(zip(names, viol_t.tolist())))


def _finite_or(a, fill):
    out = a.astype(np.float64)
    out[(a <= _engine.NEG) | (a >= _engine.POS)] = fill
    return out


# --------------------------------------------------------------- operations

def evolve_three_state(init: Configuration, e: EventEnsemble, t_end: float,
                       sample_grid: Sequence[float] = (), *, snapshots: bool = True,
                       start_time: float = 0.0, lattice=None) -> TrajectoryRecord:
    return run_coupled([("three_state", init)], e, t_end, sample_grid, start_time=start_time,
                       lattice=lattice, snapshots=snapshots).records[0]


def evolve_contact(init: SiteSet, e: EventEnsemble, t_end: float,
                   arrow_policy: str = "all_arrows", sample_grid: Sequence[float] = (), *,
                   snapshots: bool = True, start_time: float = 0.0,
                   lattice=None) -> TrajectoryRecord:
    if arrow_policy not in ARROW_POLICIES:
        raise ValueError(f"arrow_policy must be one of {ARROW_POLICIES}")
    if not isinstance(init, SiteSet):
        init = SiteSet.of(init)
    return run_coupled([(arrow_policy, init)], e, t_end, sample_grid, start_time=start_time,
                       lattice=lattice, snapshots=snapshots).records[0]


def coupled_evolve(init3: Configuration, init_c: SiteSet, e: EventEnsemble, t_end: float,
                   sample_grid: Sequence[float] = (), *, snapshots: bool = True):
    """Three-state and all-arrows contact process on the same realization."""
    run = run_coupled([("three_state", init3), ("all_arrows", init_c)], e, t_end,
                      sample_grid, snapshots=snapshots)
    return run.records[0], run.records[1]


# ----------------------------------------------------------- competitions

OUTCOME_NAMES = ("A", "B", "S")


@dataclass
class CompetitionRecord:
    """Frontier competitions of the half-line three-state process.

    ``tau[0] = 0`` and ``upsilon[0] = 0``; competition ``n`` starts at
    ``tau[n-1]`` and resolves at ``resolve_times[n-1]`` with
    ``outcomes[n-1]`` in ``{"A", "B", "S"}`` (residual arrow, common arrow,
    recovery first).
    """

    depth: int
    t_end: float
    times: np.ndarray
    rbar: np.ndarray
    xbar: np.ndarray
    R0: np.ndarray
    R_stage: np.ndarray
    F: np.ndarray
    N: np.ndarray
    D: np.ndarray
    n_infected: np.ndarray
    tau: np.ndarray
    outcomes: List[str]
    resolve_times: np.ndarray
    upsilon: np.ndarray
    stage_edge_at_hit: np.ndarray
    rbar_at_hit: np.ndarray
    violations: Dict[str, int]
    event_count: int
    stage_sets: Optional[List[SiteSet]] = None
    stage_edges: Optional[Dict[int, np.ndarray]] = None

    @property
    def extinct(self):
        return self.n_infected == 0

    def outcome_counts(self, t: float) -> Dict[str, int]:
        """Outcomes of competitions resolved by time ``t``."""
        counts = {k: 0 for k in OUTCOME_NAMES}
        for o, rt in zip(self.outcomes, self.resolve_times):
            if rt <= t:
                counts[o] += 1
        return counts

    def identity_violations(self) -> Dict[str, int]:
        """Pathwise identities, counted over the whole run and every grid time."""
        out = dict(self.violations)
        f_bad = x_bad = n_bad = nd_bad = 0
        for g, t in enumerate(self.times):
            c = self.outcome_counts(t)
            f_bad += int(self.F[g] != c["A"])
            x_bad += int(self.xbar[g] != c["B"])
            n_bad += int(self.N[g] > c["A"] + c["B"] + c["S"])
            nd_bad += int(self.N[g] > self.F[g] + self.xbar[g] + self.D[g])
        out["F_equals_A"] = f_bad
        out["xbar_equals_B"] = x_bad
        out["N_le_outcomes"] = n_bad
        out["N_le_F_xbar_D"] = nd_bad
        ups = self.upsilon
        out["upsilon_increasing"] = int(np.sum(np.diff(ups) <= 0)) if ups.size > 1 else 0
        a_times = [rt for o, rt in zip(self.outcomes, self.resolve_times) if o == "A"]
        out["upsilon_is_A_time"] = int(len(a_times) != ups.size - 1 or
                                       not np.array_equal(np.asarray(a_times), ups[1:]))
        out["hit_is_rbar_plus_1"] = int(np.sum(self.stage_edge_at_hit[1:] != self.rbar_at_hit[1:] + 1))
        return out

    def r0_bound_failures(self) -> int:
        """Grid times where ``N > R0 + xbar + D``.

        This version of the bound holds in mean but not path by path, so it is
        reported rather than asserted.
        """
        ok = np.isfinite(self.R0)
        return int(np.sum(ok & (self.N > np.where(ok, self.R0, 0) + self.xbar + self.D)))

    def csv_rows(self, rep: int = 0) -> List[dict]:
        rows = []
        for g, t in enumerate(self.times):
            empty = self.n_infected[g] == 0
            rows.append({
                "rep": rep, "t": float(t),
                "r": "" if empty else int(self.rbar[g]),
                "x": int(self.xbar[g]),
                "n_infected": int(self.n_infected[g]),
                "extinct": int(empty),
                "R0": "" if not math.isfinite(self.R0[g]) else int(self.R0[g]),
                "F": int(self.F[g]), "N": int(self.N[g]), "D": int(self.D[g]),
            })
        return rows

    def to_json(self) -> dict:
        def ints(a):
            return [None if not math.isfinite(v) else int(v) for v in a]

        out = {
            "depth": self.depth, "t_end": self.t_end,
            "times": [float(t) for t in self.times],
            "rbar": ints(self.rbar), "xbar": ints(self.xbar), "R0": ints(self.R0),
            "R_stage": ints(self.R_stage), "F": ints(self.F), "N": ints(self.N),
            "D": ints(self.D), "n_infected": ints(self.n_infected),
            "tau": [float(v) for v in self.tau], "outcomes": list(self.outcomes),
            "resolve_times": [float(v) for v in self.resolve_times],
            "upsilon": [float(v) for v in self.upsilon],
            "violations": dict(self.violations), "event_count": self.event_count,
        }
        if self.stage_edges is not None:
            out["stage_edges"] = {str(k): ints(v) for k, v in self.stage_edges.items()}
        return out


COMPETITION_CSV_COLUMNS = TRAJECTORY_CSV_COLUMNS + ("R0", "F", "N", "D")


def instrument_competitions(depth: int, e: EventEnsemble, t_end: float,
                            sample_grid: Sequence[float] = (), *, full_stages: bool = False,
                            stage_sets: bool = False) -> CompetitionRecord:
    """Run the half-line three-state process with stage contact processes.

    With ``full_stages`` every stage process is also continued to ``t_end``
    and its rightmost site recorded on the grid.
    """
    if not e.params.mu > e.params.lam:
        raise ValueError("competition instrumentation requires mu > lambda")
    if depth < 0:
        raise ValueError("truncation depth must be nonnegative")
    grid = _check_grid(sample_grid, 0.0, t_end, e.horizon)
    want_sets = bool(stage_sets or full_stages)
    margin = 32 + int(math.ceil(max(e.params.max_rate, 1.0) * t_end))
    while True:
        out = _engine.run_competitions(
            e.engine_args, np.int8(e.params.residual_target), np.int64(depth),
            np.float64(t_end), np.int64(-depth - 1), np.int64(margin), grid, want_sets)
        if out[0] == _engine.OK:
            break
        margin *= 2
    (_, rec, tau, res_t, outcome, ups, hit_edge, hit_rbar, set_off, set_site, counts) = out
    n_tau_lt = np.array([int(np.sum(tau[1:] < t)) for t in grid], dtype=np.int64)
    sets = None
    if want_sets:
        sets = [SiteSet.of(range(-depth, 1), depth)]
        for k in range(1, ups.size):
            sets.append(SiteSet(tuple(set_site[set_off[k - 1]:set_off[k]].tolist()), depth))
    record = CompetitionRecord(
        depth=int(depth), t_end=float(t_end), times=grid.copy(),
        rbar=_finite_or(rec[0], -math.inf), xbar=rec[1].astype(np.float64),
        R0=_finite_or(rec[2], -math.inf), R_stage=_finite_or(rec[3], -math.inf),
        F=rec[4].copy(), N=n_tau_lt, D=rec[5].copy(), n_infected=rec[6].copy(),
        tau=tau, outcomes=[OUTCOME_NAMES[o] for o in outcome], resolve_times=res_t,
        upsilon=ups, stage_edge_at_hit=hit_edge, rbar_at_hit=hit_rbar,
        violations={"eq3_coincidence": int(counts[1]), "eq4_split": int(counts[2]),
                    "domination": int(counts[3])},
        event_count=int(counts[0]), stage_sets=sets)
    if full_stages:
        edges = {0: record.R0.copy()}
        for k in range(1, ups.size):
            start = float(ups[k])
            later = [t for t in grid if t >= start]
            vals = np.full(grid.size, np.nan)
            if later:
                tr = evolve_contact(sets[k], e, t_end, "all_arrows", later,
                                    snapshots=False, start_time=start)
                vals[grid.size - len(later):] = tr.r
            edges[k] = vals
        record.stage_edges = edges
    return record


def superadditivity_check(depth: int, e: EventEnsemble, s: float, u: float):
    """Return ``(xbar_0s, xbar_su, xbar_0u)`` for the restart at time ``s``."""
    if not 0 <= s <= u:
        raise ValueError("need 0 <= s <= u")
    base = evolve_three_state(Configuration.eta_bar(depth), e, u, [s, u], snapshots=False)
    x_s, x_u = int(base.x[0]), int(base.x[1])
    restart = evolve_three_state(Configuration.eta_y(x_s, depth), e, u, [u],
                                 snapshots=False, start_time=s)
    return x_s, int(restart.x[0]) - x_s, x_u
