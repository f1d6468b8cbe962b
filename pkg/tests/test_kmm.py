import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netda.data import LabeledDomain, make_shifted_gaussians
from netda.kernel import KernelSpec, cross_kernel, kernel_matrix
from netda.kmm import (
    KmmError,
    default_epsilon,
    kmm_weights,
    project_box_slab,
    select_validation,
    solve_kmm_qp,
    sum_bounds,
    validation_size,
)

from oracles import kmm_grid_2d

SPEC = KernelSpec("rbf", 1.0)


def qp_inputs(Xs, Xt, spec=SPEC):
    K = kernel_matrix(Xs, spec).values
    K = K + 1e-8 * np.trace(K) / len(K) * np.eye(len(K))
    kappa = len(Xs) / len(Xt) * cross_kernel(Xs, Xt, spec).sum(axis=1)
    return K, kappa


def test_default_epsilon():
    assert default_epsilon(100) == pytest.approx(0.9)
    assert sum_bounds(100, 0.9) == pytest.approx((10.0, 190.0))


def test_unit_box_zero_slack_gives_ones_exactly():
    s, t = make_shifted_gaussians(0, 40, 30, 2, 2, 1.5, 0.0)
    res = kmm_weights(s.features, t.features, KernelSpec(), B=1.0, epsilon=0.0)
    assert np.array_equal(res.weights, np.ones(40))
    assert res.feasible


def test_duplicated_target_gives_near_uniform_weights():
    s, _ = make_shifted_gaussians(3, 80, 80, 2, 2, 0.0, 0.0)
    res = kmm_weights(s.features, s.features.copy(), KernelSpec())
    assert np.max(np.abs(res.weights - 1.0)) <= 0.15


def test_point_near_target_gets_more_weight():
    Xs = np.array([[0.0, 0.0], [4.0, 0.0]])
    Xt = np.array([[0.2, 0.1], [-0.1, 0.3], [0.1, -0.2]])
    res = kmm_weights(Xs, Xt, SPEC, B=5.0, epsilon=0.5)
    assert res.weights[0] > res.weights[1]
    K, kappa = qp_inputs(Xs, Xt)
    np.testing.assert_allclose(res.weights, kmm_grid_2d(K, kappa, 5.0, 0.5), atol=1e-2)


def test_infeasible_box_rejected():
    with pytest.raises(KmmError, match="infeasible"):
        solve_kmm_qp(np.eye(4), np.ones(4), B=0.1, epsilon=0.5)
    with pytest.raises(KmmError):
        solve_kmm_qp(np.eye(2), np.ones(2), B=-1.0, epsilon=0.5)


def test_select_validation_hand_sort():
    d = LabeledDomain(np.zeros((4, 1)), np.array([1, 2, 1, 2]))
    split = select_validation(d, [0.1, 0.9, 0.5, 0.7], 0.5)
    assert (split.validation_indices + 1).tolist() == [2, 4]
    assert (split.train_indices + 1).tolist() == [1, 3]


def test_select_validation_ties_and_rounding():
    d = LabeledDomain(np.zeros((10, 1)), np.ones(10, dtype=int))
    split = select_validation(d, np.ones(10), 0.3)
    assert split.validation_indices.tolist() == [0, 1, 2]
    assert validation_size(10, 0.3) == 3
    assert validation_size(5, 0.3) == 2  # 1.5 rounds half up
    assert validation_size(15, 0.3) == 5  # 4.5 rounds half up


def test_select_validation_checks():
    d = LabeledDomain(np.zeros((3, 1)))
    with pytest.raises(ValueError):
        select_validation(d, [1.0, 2.0], 0.3)
    with pytest.raises(ValueError):
        select_validation(d, [1.0, 2.0, 3.0], 1.0)


def bisection_projection(y, B, lo, hi):
    x = np.clip(y, 0, B)
    if lo <= x.sum() <= hi:
        return x
    goal = hi if x.sum() > hi else lo
    a, b = y.min() - B - 1.0, y.max() + 1.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if np.clip(y - mid, 0, B).sum() > goal:
            a = mid
        else:
            b = mid
    return np.clip(y - 0.5 * (a + b), 0, B)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 10, allow_nan=False), min_size=1, max_size=12),
       st.floats(0.5, 4.0), st.floats(0.0, 0.99))
def test_projection_matches_bisection(y, B, eps):
    y = np.array(y)
    n = len(y)
    lo, hi = sum_bounds(n, eps)
    if B * n < lo:
        return
    x = project_box_slab(y, B, lo, hi)
    assert np.all(x >= 0) and np.all(x <= B)
    assert lo - 1e-9 * n <= x.sum() <= hi + 1e-9 * n
    np.testing.assert_allclose(x, bisection_projection(y, B, lo, hi), atol=1e-8)


def random_instance(seed, n):
    rng = np.random.default_rng(seed)
    Xs = rng.uniform(-3, 3, (n, 2))
    Xs[1:] += np.arange(1, n)[:, None] * 2.5  # keep source points apart
    Xt = rng.standard_normal((rng.integers(3, 8), 2)) + Xs[rng.integers(0, n)]
    return Xs, Xt


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(1.2, 2.5), st.floats(0.0, 0.8))
def test_two_variable_matches_exhaustive_grid(seed, B, eps):
    Xs, Xt = random_instance(seed, 2)
    res = kmm_weights(Xs, Xt, SPEC, B=B, epsilon=eps)
    K, kappa = qp_inputs(Xs, Xt)
    np.testing.assert_allclose(res.weights, kmm_grid_2d(K, kappa, B, eps), atol=1e-2)


def kmm_grid_3d(K, kappa, B, eps, step=1e-3):
    # exhaustive over (w1, w2); the best w3 for each pair is a clipped 1-D minimizer
    g = np.arange(0.0, B + step / 2, step)
    w1, w2 = np.meshgrid(g, g, indexing="ij")
    lo, hi = sum_bounds(3, eps)
    a = np.maximum(0.0, lo - w1 - w2)
    b = np.minimum(B, hi - w1 - w2)
    ok = a <= b
    w3 = np.clip((kappa[2] - K[2, 0] * w1 - K[2, 1] * w2) / K[2, 2], a, np.maximum(a, b))
    W = np.stack([w1, w2, w3])
    f = 0.5 * np.einsum("i...,ij,j...->...", W, K, W) - np.einsum("i,i...->...", kappa, W)
    f = np.where(ok, f, np.inf)
    i = np.unravel_index(np.argmin(f), f.shape)
    return W[(slice(None),) + i]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(1.2, 1.8), st.floats(0.0, 0.6))
def test_three_variable_matches_grid(seed, B, eps):
    Xs, Xt = random_instance(seed, 3)
    res = kmm_weights(Xs, Xt, SPEC, B=B, epsilon=eps)
    K, kappa = qp_inputs(Xs, Xt)
    np.testing.assert_allclose(res.weights, kmm_grid_3d(K, kappa, B, eps), atol=1e-2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(2, 40), st.floats(1.0, 1000.0), st.one_of(st.none(), st.floats(0.0, 0.95)))
def test_constraints_and_monotone_objective(seed, n_s, B, eps):
    rng = np.random.default_rng(seed)
    Xs = rng.standard_normal((n_s, 3))
    Xt = rng.standard_normal((rng.integers(2, 40), 3)) + rng.uniform(-2, 2, 3)
    res = kmm_weights(Xs, Xt, KernelSpec(), B=B, epsilon=eps)
    w = res.weights
    assert np.all(w >= 0) and np.all(w <= B)
    assert abs(w.sum() - n_s) <= n_s * res.epsilon + 1e-6
    assert res.feasible
    assert np.all(np.diff(res.objective_trace) <= 1e-10)
