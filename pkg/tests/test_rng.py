import numpy as np
from hypothesis import given, strategies as st

from ohm import rng


def test_uniforms_in_unit_interval_and_deterministic():
    keys = np.arange(10_000)
    u = rng.uniforms(7, rng.TAG_EDGE, keys)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert np.array_equal(u, rng.uniforms(7, rng.TAG_EDGE, keys))
    # evaluation order does not matter
    perm = np.random.default_rng(0).permutation(len(keys))
    assert np.array_equal(u[perm], rng.uniforms(7, rng.TAG_EDGE, keys[perm]))


def test_streams_and_seeds_differ():
    keys = np.arange(1000)
    a = rng.uniforms(1, rng.TAG_EDGE, keys)
    assert not np.array_equal(a, rng.uniforms(2, rng.TAG_EDGE, keys))
    assert not np.array_equal(a, rng.uniforms(1, rng.TAG_MARK_SIGN, keys))


def test_uniform_moments():
    u = rng.uniforms(3, 11, np.arange(200_000))
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(u.var() - 1.0 / 12.0) < 0.002


def test_negative_keys_are_accepted():
    u = rng.uniforms(0, np.array([-3, -2, -1]), np.array([5, 5, 5]))
    assert len(np.unique(u)) == 3


@given(st.integers(0, 2**64 - 1), st.integers(-2**40, 2**40))
def test_scalar_equals_vector_entry(seed, key):
    vec = rng.uniforms(seed, np.array([key, key + 1]))
    assert rng.uniforms(seed, np.array([key]))[0] == vec[0]
