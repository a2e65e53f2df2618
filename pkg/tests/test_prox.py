import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from falbp.certify import l1_projection_multiplier, l1_projection_oracle
from falbp.prox import (ball_norm, constrained_shrink, min_norm_subgradient, normalize_gamma,
                        project_ball, shrink)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False, allow_subnormal=False)
vectors = arrays(np.float64, st.integers(1, 40), elements=finite)


def test_shrink_examples():
    assert np.array_equal(shrink(np.array([3.0, -0.5, -2.0]), 1.0), [2.0, -0.0, -1.0])
    with pytest.raises(ValueError):
        shrink(np.ones(2), -1.0)


def test_constrained_shrink_hand_case():
    res = constrained_shrink(np.array([3.0, 1.0]), 0.0, 1.0)
    assert res.active and np.isclose(res.alpha_star, 2.0)
    assert np.allclose(res.x, [1.0, 0.0])


def test_constrained_shrink_inactive_is_plain_shrink():
    y = np.array([0.5, -2.0, 1.0])
    res = constrained_shrink(y, 0.4, 100.0)
    assert not res.active and res.alpha_star == 0.0
    assert np.array_equal(res.x, shrink(y, 0.4))


@given(y=vectors, lam=st.floats(0, 5), frac=st.floats(0.01, 0.99))
@settings(max_examples=200, deadline=None)
def test_constrained_shrink_matches_bisection_oracle(y, lam, frac):
    plain = np.abs(shrink(y, lam)).sum()
    assume(plain > 1e-6)
    eta = frac * plain
    res = constrained_shrink(y, lam, eta)
    assert res.active
    ref = l1_projection_oracle(y, lam, eta)
    assert np.max(np.abs(res.x - ref)) <= 1e-9 * max(1.0, np.max(np.abs(y)))
    assert abs(np.abs(res.x).sum() - eta) <= 1e-9 * max(1.0, eta)


@given(y=vectors, lam=st.floats(0, 5), eta=st.floats(0.01, 100))
@settings(max_examples=200, deadline=None)
def test_constrained_shrink_optimality_conditions(y, lam, eta):
    res = constrained_shrink(y, lam, eta)
    x = res.x
    # feasible up to rounding in the prefix sums
    assert np.abs(x).sum() <= eta + 1e-13 * max(1.0, np.abs(y).sum())
    # x = shrink(y, lam + alpha) with alpha >= 0, and alpha > 0 only on the boundary
    assert res.alpha_star >= 0
    assert np.allclose(x, shrink(y, lam + res.alpha_star), atol=1e-12 * max(1.0, np.abs(y).max()))
    if res.alpha_star > 0:
        assert eta - np.abs(x).sum() <= 1e-13 * max(1.0, np.abs(y).sum())


def test_constrained_shrink_input_validation():
    with pytest.raises(ValueError):
        constrained_shrink(np.ones(2), 0.0, 0.0)
    with pytest.raises(ValueError):
        constrained_shrink(np.ones(2), -1.0, 1.0)
    with pytest.raises(ValueError):
        constrained_shrink(np.array([1.0, np.nan]), 0.0, 1.0)


def test_constrained_shrink_tiny_radius():
    res = constrained_shrink(np.array([1.0]), 0.0, 1e-190)
    assert res.active and np.abs(res.x).sum() <= 1e-190


def test_oracle_precondition_asserts():
    assert np.isclose(l1_projection_multiplier(np.array([3.0, 1.0]), 0.0, 1.0), 2.0)
    with pytest.raises(AssertionError):
        l1_projection_oracle(np.array([0.5, 0.2]), 0.0, 1.0)


@pytest.mark.parametrize("gamma", [1, 2, "inf"])
@given(s=arrays(np.float64, st.integers(1, 30), elements=finite), delta=st.floats(0, 50))
@settings(max_examples=60, deadline=None)
def test_project_ball_feasible_and_idempotent(gamma, s, delta):
    p = project_ball(s, delta, gamma)
    assert ball_norm(p, gamma) <= delta * (1 + 1e-12) + 1e-13 * max(1.0, np.abs(s).sum())
    assert np.allclose(project_ball(p, delta, gamma), p, atol=1e-9 * max(1.0, delta))
    if ball_norm(s, gamma) <= delta:
        assert np.array_equal(p, s)


@pytest.mark.parametrize("gamma", [1, 2, "inf"])
def test_project_ball_is_nearest_point(gamma):
    rng = np.random.default_rng(0)
    s = rng.standard_normal(8) * 3
    p = project_ball(s, 1.0, gamma)
    for _ in range(200):
        q = project_ball(p + 0.3 * rng.standard_normal(8), 1.0, gamma)
        assert np.linalg.norm(s - p) <= np.linalg.norm(s - q) + 1e-12


def test_normalize_gamma():
    assert normalize_gamma("2") == 2 and normalize_gamma("inf") == np.inf
    with pytest.raises(ValueError):
        normalize_gamma(3)


def test_min_norm_subgradient_by_hand():
    x = np.array([1.0, -2.0, 0.0, 0.0])
    g = np.array([0.5, 0.5, 0.3, -2.0])
    # 1 + 0.5, 0.5 - 1, zero (|0.3| <= 1), |-2| - 1
    expected = 1.5**2 + 0.5**2 + 0.0 + 1.0
    assert np.isclose(min_norm_subgradient(x, g, 1.0).norm_sq, expected)
    with pytest.raises(ValueError):
        min_norm_subgradient(x, g[:3], 1.0)


@given(x=arrays(np.float64, 6, elements=st.floats(-3, 3)), g=arrays(np.float64, 6, elements=st.floats(-3, 3)))
def test_min_norm_subgradient_is_minimal(x, g):
    # any element of lam*d||x||_1 + g has at least the reported norm
    lam = 0.7
    best = min_norm_subgradient(x, g, lam).norm
    q = np.where(x > 0, lam, np.where(x < 0, -lam, np.clip(-g, -lam, lam)))
    assert np.isclose(best, np.linalg.norm(g + q))
    q2 = np.where(x == 0, lam * np.sign(np.sin(np.arange(6))), q)
    assert best <= np.linalg.norm(g + q2) + 1e-12
