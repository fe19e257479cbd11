import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from contactlab.ensemble import (
    Direction, Event, Kind, Params, StreamKey, events_for_stream, events_in_window,
    format_event_lines, load_synthetic, new_random_ensemble, new_synthetic_ensemble,
    parse_event_lines,
)
from contactlab.rng import child_seed

CL0 = StreamKey.common(0, Direction.LEFT)
CR0 = StreamKey.common(0, Direction.RIGHT)


@pytest.mark.parametrize("lam,mu", [(-1, 1), (1, 0), (math.inf, 1), (1, math.nan)])
def test_params_must_be_positive_and_finite(lam, mu):
    with pytest.raises(ValueError, match="positive and finite"):
        Params(lam, mu)


def test_rate_split():
    p = Params(1.0, 2.5)
    assert (p.common_rate, p.residual_rate, p.max_rate, p.residual_target) == (1.0, 1.5, 2.5, 0)
    q = Params(3.0, 2.0)
    assert (q.common_rate, q.residual_rate, q.residual_target) == (2.0, 1.0, -1)


def test_stream_key_codes_roundtrip():
    for code in range(5):
        assert StreamKey.from_code(4, code).code == code
    assert StreamKey.recovery(3).target == 3
    assert CL0.target == -1 and CR0.target == 1


def test_random_ensemble_validation():
    with pytest.raises(ValueError):
        new_random_ensemble(Params(1, 2), 1.5, 1.0)
    with pytest.raises(ValueError):
        new_random_ensemble(Params(1, 2), 1, 0.0)


@given(st.integers(0, 2**63), st.floats(0.5, 20))
def test_stream_query_is_deterministic(seed, t):
    e = new_random_ensemble(Params(1, 2), seed, 20.0)
    assert events_for_stream(e, CR0, 0, t) == events_for_stream(e, CR0, 0, t)


@given(st.integers(0, 2**63), st.floats(0.5, 10), st.floats(0.1, 10))
def test_prefix_property(seed, t, extra):
    e = new_random_ensemble(Params(1.5, 2.5), seed, 20.0)
    short = events_for_stream(e, CR0, 0, t)
    long = events_for_stream(e, CR0, 0, t + extra)
    assert long[:len(short)] == short
    assert all(ev.time > t for ev in long[len(short):])


def test_longer_horizon_agrees_on_overlap():
    e = new_random_ensemble(Params(1, 2), 5, 10.0)
    f = e.with_horizon(30.0)
    assert events_in_window(e, -3, 3, 0, 10) == events_in_window(f, -3, 3, 0, 10)


def test_window_is_sorted_and_respects_bounds():
    e = new_random_ensemble(Params(1, 2), 9, 5.0)
    evs = events_in_window(e, -2, 2, 1.0, 4.0)
    assert evs == sorted(evs, key=Event.sort_key)
    assert all(-2 <= ev.key.site <= 2 and -2 <= ev.key.target <= 2 for ev in evs)
    assert all(1.0 < ev.time <= 4.0 for ev in evs)


def test_raising_a_rate_adds_arrows_only():
    lo = new_random_ensemble(Params(1.0, 1.4), 21, 30.0)
    hi = new_random_ensemble(Params(1.0, 2.7), 21, 30.0)
    key = StreamKey.residual(0, Direction.RIGHT)
    a = {ev.time for ev in events_for_stream(lo, key, 0, 30)}
    b = {ev.time for ev in events_for_stream(hi, key, 0, 30)}
    assert a <= b and len(b) > len(a)


def _ks_exponential(gaps, rate):
    x = np.sort(gaps)
    n = x.size
    cdf = 1 - np.exp(-rate * x)
    return max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))


@pytest.mark.parametrize("rate_pair,code,rate", [((1.0, 2.0), 0, 1.0), ((1.0, 3.5), 2, 2.5),
                                                 ((0.3, 0.3), 4, 1.0)])
def test_gaps_are_exponential(rate_pair, code, rate):
    gaps = []
    seed = 0
    while len(gaps) < 10000:
        e = new_random_ensemble(Params(*rate_pair), child_seed(1, seed), 200.0)
        times = [0.0] + [ev.time for ev in events_for_stream(e, StreamKey.from_code(0, code), 0, 200)]
        gaps.extend(np.diff(times))
        seed += 1
    gaps = np.array(gaps)
    assert _ks_exponential(gaps, rate) < 1.628 / math.sqrt(gaps.size)


def test_distinct_streams_uncorrelated():
    n = 2000
    a, b = np.empty(n), np.empty(n)
    for i in range(n):
        e = new_random_ensemble(Params(1, 2), child_seed(4, i), 10.0)
        a[i] = len(events_for_stream(e, CR0, 0, 10))
        b[i] = len(events_for_stream(e, StreamKey.residual(0, Direction.RIGHT), 0, 10))
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(n)
    assert abs(a.mean() - 10) < 4 * math.sqrt(10 / n)


def test_synthetic_serves_exactly_its_events():
    items = [(0.2, CR0), (0.4, StreamKey.recovery(0)), (0.5, CR0)]
    e = new_synthetic_ensemble(items, 1.0)
    assert [ev.time for ev in events_for_stream(e, CR0, 0, 1)] == [0.2, 0.5]
    assert [ev.seq for ev in events_for_stream(e, CR0, 0, 1)] == [1, 2]
    assert events_for_stream(e, CL0, 0, 1) == []


@pytest.mark.parametrize("items", [
    [(0.5, CR0), (0.5, CL0)],
    [(0.5, CR0), (0.2, CL0)],
    [(1.5, CR0)],
    [(0.5, StreamKey(Kind.RECOVERY, 0, Direction.LEFT))],
    [(0.5, StreamKey(Kind.COMMON, 0, None))],
])
def test_synthetic_rejects_bad_input(items):
    with pytest.raises(ValueError):
        new_synthetic_ensemble(items, 1.0)


def test_event_file_roundtrip(tmp_path):
    text = """# golden trace
0.2 CommonArrow 0 right
0.3 ResidualArrow 1 left
0.4 RecoveryMark 0
"""
    items = parse_event_lines(text.splitlines())
    e = new_synthetic_ensemble(items, 1.0)
    assert parse_event_lines(format_event_lines(e.events).splitlines()) == items
    p = tmp_path / "trace.txt"
    p.write_text(text)
    assert load_synthetic(p, 1.0).events == e.events


@pytest.mark.parametrize("line", ["0.2 CommonArrow 0", "x CommonArrow 0 right",
                                  "0.2 Arrow 0 right", "0.2 RecoveryMark 0 left"])
def test_event_file_errors(line):
    with pytest.raises(ValueError):
        parse_event_lines([line])
