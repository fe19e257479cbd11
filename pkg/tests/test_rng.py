import numpy as np
from hypothesis import given, strategies as st

from contactlab.rng import as_seed, child_seed, stream_key, uniform_open

seeds = st.integers(min_value=0, max_value=2**64 - 1)


@given(seeds, st.integers(0, 10**9))
def test_child_seed_is_a_pure_function(master, index):
    assert child_seed(master, index) == child_seed(master, index)
    assert 0 <= child_seed(master, index) < 2**64


def test_child_seeds_differ_across_indices():
    s = {child_seed(7, i) for i in range(10000)}
    assert len(s) == 10000


def test_negative_index_rejected():
    import pytest
    with pytest.raises(ValueError):
        child_seed(1, -1)


@given(seeds, st.integers(-10**6, 10**6), st.integers(0, 4), st.integers(0, 3),
       st.integers(0, 10**6))
def test_uniform_in_open_unit_interval(seed, site, code, layer, counter):
    key = np.uint64(stream_key(as_seed(seed), site, code, layer))
    u = uniform_open(key, np.uint64(counter), np.uint64(0))
    assert 0.0 < u < 1.0


def test_uniform_moments():
    key = np.uint64(stream_key(as_seed(3), 0, 0, 0))
    u = np.array([uniform_open(key, np.uint64(c), np.uint64(0)) for c in range(20000)])
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)
    assert abs(u.var() - 1 / 12) < 0.005


def test_keys_separate_sites_codes_layers():
    s = as_seed(11)
    keys = {int(stream_key(s, site, code, layer))
            for site in range(-20, 21) for code in range(5) for layer in range(3)}
    assert len(keys) == 41 * 5 * 3


def test_as_seed_wraps_negative_integers():
    assert int(as_seed(-1)) == 2**64 - 1
