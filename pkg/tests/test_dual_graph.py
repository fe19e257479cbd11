import pytest
from hypothesis import given, strategies as st

from contactlab.dual_graph import (
    backward_reachable, build_event_graph, constrained_forward, constrained_reachable,
    dump_graph, forward_reachable,
)
from contactlab.ensemble import Direction, Params, StreamKey, new_random_ensemble, new_synthetic_ensemble
from contactlab.kernel import SiteSet, evolve_contact, run_coupled

R = Direction.RIGHT
seeds = st.integers(0, 2**63)


def graph(items, window=(-3, 3, 1.0), policy="all_arrows"):
    return build_event_graph(new_synthetic_ensemble(items, window[2]), window, policy)


def test_no_events_is_identity():
    g = graph([])
    for x in g.sites:
        assert forward_reachable(g, [x], 0.0, 1.0) == SiteSet.of([x])
        assert len(g.segments(x)) == 1


def test_single_arrow():
    g = graph([(0.5, StreamKey.common(0, R))])
    assert forward_reachable(g, [0], 0.0, 1.0) == SiteSet.of([0, 1])
    assert forward_reachable(g, [0], 0.0, 0.4) == SiteSet.of([0])


def test_mark_blocks_segment():
    g = graph([(0.4, StreamKey.recovery(0)), (0.5, StreamKey.common(0, R))])
    assert forward_reachable(g, [0], 0.0, 1.0) == SiteSet.of([])
    assert forward_reachable(g, [0], 0.45, 1.0) == SiteSet.of([0, 1])


def test_mark_at_query_ends():
    g = graph([(0.4, StreamKey.recovery(0))])
    assert forward_reachable(g, [0], 0.0, 0.4) == SiteSet.of([])
    assert forward_reachable(g, [0], 0.4, 1.0) == SiteSet.of([0])


def test_common_only_policy_drops_residual_arrows():
    items = [(0.5, StreamKey.residual(0, R))]
    assert forward_reachable(graph(items), [0], 0, 1) == SiteSet.of([0, 1])
    assert forward_reachable(graph(items, policy="common_only"), [0], 0, 1) == SiteSet.of([0])


def test_events_leaving_window_are_dropped():
    g = graph([(0.5, StreamKey.common(3, R))])
    assert g.arrows == ()


def test_bad_arguments():
    e = new_synthetic_ensemble([], 1.0)
    with pytest.raises(ValueError):
        build_event_graph(e, (2, 1, 1.0))
    with pytest.raises(ValueError):
        build_event_graph(e, (0, 1, 2.0))
    g = build_event_graph(e, (0, 1, 1.0))
    with pytest.raises(ValueError):
        forward_reachable(g, [0], 0.8, 0.2)


def test_dump_lists_segments_and_edges():
    text = dump_graph(graph([(0.2, StreamKey.recovery(1)), (0.5, StreamKey.common(0, R))]))
    assert "segment 1 1 0.2 1.0" in text
    assert "edge common 0:0 1:1 0.5" in text


@given(seeds)
def test_forward_matches_engine(seed):
    e = new_random_ensemble(Params(1.5, 1.5), seed, 4.0)
    g = build_event_graph(e, (-15, 15, 4.0))
    grid = [1.0, 2.0, 4.0]
    rec = evolve_contact(SiteSet.of([0, 2]), e, 4.0, "all_arrows", grid, lattice=(-15, 15))
    for k, t in enumerate(grid):
        assert forward_reachable(g, [0, 2], 0.0, t) == rec.infected_at(k)


@given(seeds, st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_forward_and_backward_agree(seed, s, dt):
    e = new_random_ensemble(Params(1.0, 2.0), seed, 4.0)
    g = build_event_graph(e, (-8, 8, 4.0))
    t = s + dt
    A, B = [-1, 0], [0, 1, 2]
    fwd = bool(set(forward_reachable(g, A, s, t)) & set(B))
    bwd = bool(set(backward_reachable(g, B, t, s)) & set(A))
    assert fwd == bwd


@given(seeds)
def test_full_constraint_is_unconstrained(seed):
    e = new_random_ensemble(Params(1.0, 2.0), seed, 3.0)
    g = build_event_graph(e, (-6, 6, 3.0))
    assert constrained_forward(g, [0], 0.0, 3.0, g.sites) == forward_reachable(g, [0], 0.0, 3.0)
    assert constrained_reachable(g, [0], 0.0, [1], 3.0, g.sites) == (1 in forward_reachable(g, [0], 0.0, 3.0))


@given(seeds)
def test_box_matches_boxed_engine(seed):
    e = new_random_ensemble(Params(1.2, 1.2), seed, 3.0)
    g = build_event_graph(e, (-10, 10, 3.0))
    box = range(-1, 3)
    rec = run_coupled([("all_arrows", SiteSet.of([0, 1]))], e, 3.0, [3.0], lattice=(-1, 2),
                      snapshots=True).records[0]
    assert constrained_forward(g, [0, 1], 0.0, 3.0, box) == rec.infected_at(0)


@given(seeds, st.floats(0.05, 0.95))
def test_extra_arrow_never_shrinks_and_extra_mark_never_grows(seed, u):
    e = new_random_ensemble(Params(1.0, 1.0), seed, 1.0)
    from contactlab.ensemble import events_in_window
    base = [(ev.time, ev.key) for ev in events_in_window(e, -4, 4, 0.0, 1.0)]
    times = {t for t, _ in base}
    if u in times:
        return
    w = (-4, 4, 1.0)

    def reach(items):
        return set(forward_reachable(graph(sorted(items), w), [0], 0.0, 1.0))

    r0 = reach(base)
    assert reach(base + [(u, StreamKey.common(0, R))]) >= r0
    assert reach(base + [(u, StreamKey.recovery(1))]) <= r0
