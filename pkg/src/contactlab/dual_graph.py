"""Explicit space-time graph of a finite window, with path queries.

Vertices are arrow endpoints. Each site's time axis is cut into segments at
its recovery marks; consecutive points of one segment are joined by a
vertical edge pointing up in time, and every arrow joins its tail point to
its head point. A segment started by a mark at time ``m`` covers ``[m, m')``,
so a mark at the end time of a query blocks arrival and a mark at the start
time does not. Events are used when their time lies in ``(s, t]``.

This module shares no code with the replay engine and serves as its
brute-force reference.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

from .ensemble import EventEnsemble, Kind, events_in_window
from .kernel import ARROW_POLICIES, SiteSet


class Window(NamedTuple):
    site_min: int
    site_max: int
    t_max: float


class Arrow(NamedTuple):
    time: float
    source: int
    target: int
    kind: Kind


@dataclass(frozen=True)
class EventGraph:
    window: Window
    arrow_policy: str
    marks: Dict[int, Tuple[float, ...]]
    arrows: Tuple[Arrow, ...]
    # per site: sorted point times and the point id of each
    point_times: Dict[int, Tuple[float, ...]]
    point_ids: Dict[int, Tuple[int, ...]]
    # per point id: (site, time, segment index)
    points: Tuple[Tuple[int, float, int], ...]
    succ: Tuple[Tuple[int, ...], ...]
    pred: Tuple[Tuple[int, ...], ...]

    @property
    def sites(self) -> range:
        return range(self.window.site_min, self.window.site_max + 1)

    def segment_of(self, site: int, t: float) -> int:
        """Index of the mark-free segment of ``site`` containing time ``t``."""
        return bisect.bisect_right(self.marks.get(site, ()), t)

    def segments(self, site: int) -> List[Tuple[float, float]]:
        cuts = (0.0,) + self.marks.get(site, ()) + (self.window.t_max,)
        return [(cuts[k], cuts[k + 1]) for k in range(len(cuts) - 1)]


def build_event_graph(e: EventEnsemble, window, arrow_policy: str = "all_arrows") -> EventGraph:
    """Graph of every event with both endpoints in ``window``.

    ``window`` is ``(site_min, site_max, t_max)``.
    """
    w = Window(int(window[0]), int(window[1]), float(window[2]))
    if w.site_min > w.site_max or w.t_max <= 0:
        raise ValueError(f"empty window {tuple(w)}")
    if w.t_max > e.horizon:
        raise ValueError(f"window time {w.t_max} beyond horizon {e.horizon}")
    if arrow_policy not in ARROW_POLICIES:
        raise ValueError(f"arrow_policy must be one of {ARROW_POLICIES}")
    marks: Dict[int, List[float]] = {}
    arrows: List[Arrow] = []
    for ev in events_in_window(e, w.site_min, w.site_max, 0.0, w.t_max):
        k = ev.key
        if k.kind == Kind.RECOVERY:
            marks.setdefault(k.site, []).append(ev.time)
        elif k.kind == Kind.COMMON or arrow_policy == "all_arrows":
            arrows.append(Arrow(ev.time, k.site, k.target, k.kind))
    marks_t = {x: tuple(sorted(v)) for x, v in marks.items()}

    raw: Dict[int, List[Tuple[float, int]]] = {}
    points: List[Tuple[int, float, int]] = []
    succ: List[List[int]] = []

    def add_point(site, t):
        pid = len(points)
        points.append((site, t, bisect.bisect_right(marks_t.get(site, ()), t)))
        succ.append([])
        raw.setdefault(site, []).append((t, pid))
        return pid

    for a in arrows:
        tail = add_point(a.source, a.time)
        head = add_point(a.target, a.time)
        succ[tail].append(head)
    point_times, point_ids = {}, {}
    for site, lst in raw.items():
        lst.sort()
        point_times[site] = tuple(t for t, _ in lst)
        point_ids[site] = tuple(p for _, p in lst)
        for (_, p), (_, q) in zip(lst, lst[1:]):
            if points[p][2] == points[q][2]:
                succ[p].append(q)
    pred: List[List[int]] = [[] for _ in points]
    for p, outs in enumerate(succ):
        for q in outs:
            pred[q].append(p)
    return EventGraph(w, arrow_policy, marks_t, tuple(arrows), point_times, point_ids,
                      tuple(points), tuple(tuple(s) for s in succ), tuple(tuple(p) for p in pred))


def _check_times(g: EventGraph, s, t):
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if s < 0 or t > g.window.t_max:
        raise ValueError(f"times outside window [0, {g.window.t_max}]")


def _allowed(g: EventGraph, D: Optional[Iterable[int]]):
    if D is None:
        return set(g.sites)
    return set(D) & set(g.sites)


def _forward(g: EventGraph, A, s, t, allowed) -> set:
    starts = [a for a in A if a in allowed]
    seen = set()
    queue = deque()
    for a in starts:
        times = g.point_times.get(a, ())
        k = bisect.bisect_right(times, s)
        if k < len(times):
            p = g.point_ids[a][k]
            if g.points[p][2] == g.segment_of(a, s) and g.points[p][1] <= t:
                seen.add(p)
                queue.append(p)
    while queue:
        p = queue.popleft()
        for q in g.succ[p]:
            site, tq, _ = g.points[q]
            if q in seen or tq > t or site not in allowed:
                continue
            seen.add(q)
            queue.append(q)
    out = {a for a in starts if g.segment_of(a, s) == g.segment_of(a, t)}
    for p in seen:
        site, tp, seg = g.points[p]
        if s < tp <= t and seg == g.segment_of(site, t):
            out.add(site)
    return out


def _backward(g: EventGraph, B, t, s, allowed) -> set:
    ends = [b for b in B if b in allowed]
    seen = set()
    queue = deque()
    for b in ends:
        times = g.point_times.get(b, ())
        k = bisect.bisect_right(times, t) - 1
        if k >= 0:
            p = g.point_ids[b][k]
            if g.points[p][2] == g.segment_of(b, t) and g.points[p][1] > s:
                seen.add(p)
                queue.append(p)
    while queue:
        p = queue.popleft()
        for q in g.pred[p]:
            site, tq, _ = g.points[q]
            if q in seen or tq <= s or site not in allowed:
                continue
            seen.add(q)
            queue.append(q)
    out = {b for b in ends if g.segment_of(b, s) == g.segment_of(b, t)}
    for p in seen:
        site, tp, seg = g.points[p]
        if s < tp <= t and seg == g.segment_of(site, s):
            out.add(site)
    return out


def forward_reachable(g: EventGraph, A, s: float, t: float) -> SiteSet:
    """Sites ``x`` with a path from ``A x s`` to ``x x t``."""
    _check_times(g, s, t)
    return SiteSet.of(_forward(g, A, s, t, _allowed(g, None)))


def backward_reachable(g: EventGraph, B, t: float, s: float) -> SiteSet:
    """Sites ``x`` with a path from ``x x s`` to ``B x t``."""
    _check_times(g, s, t)
    return SiteSet.of(_backward(g, B, t, s, _allowed(g, None)))


def constrained_reachable(g: EventGraph, A, s: float, B, t: float, D) -> bool:
    """Whether some path from ``A x s`` to ``B x t`` runs vertically only on sites of ``D``."""
    _check_times(g, s, t)
    return bool(_forward(g, A, s, t, _allowed(g, D)) & set(B))


def constrained_forward(g: EventGraph, A, s: float, t: float, D) -> SiteSet:
    """Sites reached at time ``t`` by ``D``-constrained paths from ``A x s``."""
    _check_times(g, s, t)
    return SiteSet.of(_forward(g, A, s, t, _allowed(g, D)))


def dump_graph(g: EventGraph) -> str:
    """Text form: one ``segment`` line per segment, one ``edge`` line per arrow."""
    lines = [f"window {g.window.site_min} {g.window.site_max} {g.window.t_max!r}"]
    for site in g.sites:
        for k, (a, b) in enumerate(g.segments(site)):
            lines.append(f"segment {site} {k} {a!r} {b!r}")
    for a in sorted(g.arrows):
        lines.append(f"edge {a.kind.name.lower()} {a.source}:{g.segment_of(a.source, a.time)} "
                     f"{a.target}:{g.segment_of(a.target, a.time)} {a.time!r}")
    return "\n".join(lines) + "\n"
