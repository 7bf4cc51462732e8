import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_kf.numerics import (
    NotPositiveDefinite,
    RepairFailed,
    cholesky_lower,
    forward_substitute,
    spd_repair,
    symmetrize,
)


def test_cholesky_identity():
    np.testing.assert_array_equal(cholesky_lower(np.eye(2)), np.eye(2))


def test_cholesky_known_factor():
    m = np.array([[4.0, 2.0], [2.0, 5.0]])
    expected = np.array([[2.0, 0.0], [1.0, 2.0]])
    # oracle: the expected factor reproduces m
    np.testing.assert_array_equal(expected @ expected.T, m)
    np.testing.assert_allclose(cholesky_lower(m), expected, atol=1e-15)


def test_cholesky_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky_lower(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_cholesky_stack():
    m = np.stack([np.eye(2), np.array([[4.0, 2.0], [2.0, 5.0]])])
    chol = cholesky_lower(m)
    np.testing.assert_allclose(chol @ np.swapaxes(chol, -1, -2), m)


@settings(max_examples=50, deadline=None)
@given(d=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_cholesky_round_trip(d, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    m = a @ a.T + d * np.eye(d)
    chol = cholesky_lower(m)
    assert np.all(np.triu(chol, 1) == 0)
    assert np.max(np.abs(chol @ chol.T - m)) <= 1e-10 * (1 + np.max(np.abs(m)))


@pytest.mark.parametrize(
    "m, expected",
    [
        ([[1, 0], [0, 1]], [[1, 0], [0, 1]]),
        ([[1, 2], [0, 1]], [[1, 1], [1, 1]]),
        ([[0, -1], [1, 0]], [[0, 0], [0, 0]]),
    ],
)
def test_symmetrize_examples(m, expected):
    np.testing.assert_array_equal(symmetrize(np.array(m, float)), np.array(expected, float))


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 5))
def test_symmetrize_exact(seed, d):
    m = np.random.default_rng(seed).standard_normal((d, d)) * 1e3
    s = symmetrize(m)
    assert np.array_equal(s, s.T)


def test_spd_repair_leaves_spd_untouched():
    m = np.array([[4.0, 2.0], [2.0, 5.0]])
    np.testing.assert_array_equal(spd_repair(m), m)
    tiny = np.diag([1e-20, 1e-20])
    np.testing.assert_array_equal(spd_repair(tiny), tiny)


def test_spd_repair_zero_matrix():
    # trace is zero, so the ladder starts at the absolute 1e-12 and that passes
    out = spd_repair(np.zeros((2, 2)))
    np.testing.assert_array_equal(out, np.diag([1e-12, 1e-12]))


def test_spd_repair_escalates_from_given_jitter():
    m = np.array([[1.0, 1.0], [1.0, 1.0]])  # singular PSD
    out = spd_repair(m, jitter=1e-9)
    np.testing.assert_array_equal(out, m + 1e-9 * np.eye(2))


def test_spd_repair_roundoff_negative():
    m = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-14]])
    out = spd_repair(m)
    cholesky_lower(out)
    assert np.max(np.abs(out - m)) < 1e-9


def test_spd_repair_fails_on_indefinite():
    with pytest.raises(RepairFailed):
        spd_repair(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_spd_repair_stack_repairs_only_broken_members():
    good = np.array([[2.0, 0.5], [0.5, 1.0]])
    stack = np.stack([good, np.zeros((2, 2))])
    out = spd_repair(stack)
    np.testing.assert_array_equal(out[0], good)
    cholesky_lower(out)


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 5))
def test_spd_repair_idempotent(seed, d):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    m = symmetrize(a @ a.T + d * np.eye(d))
    once = spd_repair(m)
    np.testing.assert_array_equal(once, m)
    np.testing.assert_array_equal(spd_repair(once), once)


def test_forward_substitute_matches_solve(rng):
    lower = np.tril(rng.standard_normal((4, 4))) + 4 * np.eye(4)
    b = rng.standard_normal((7, 4))
    x = forward_substitute(lower, b)
    np.testing.assert_allclose(x @ lower.T, b, atol=1e-12)
