import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from genrotda import ot
from genrotda.synth import brute_force_ot


def _plan(pi):
    pi = np.asarray(pi, dtype=np.float64)
    return ot.TransportPlan(pi, pi.sum(1), pi.sum(0), 1.0, 0, True)


def _cost(C):
    C = np.asarray(C, dtype=np.float64)
    return ot.CostMatrix(C, float(np.median(C)))


# -- cost matrix -------------------------------------------------------------

def test_cost_matrix_examples():
    c = ot.cost_matrix([[0.0], [1.0]], [[0.0], [1.0]])
    np.testing.assert_array_equal(c.C, [[0, 1], [1, 0]])
    assert c.median_cost == 0.5
    assert ot.cost_matrix([[1.0, 1.0]], [[4.0, 5.0]]).C.tolist() == [[25.0]]


def test_cost_matrix_symmetric_and_zero_diagonal():
    S = np.random.default_rng(0).normal(size=(5, 3))
    C = ot.cost_matrix(S, S).C
    np.testing.assert_array_equal(C, C.T)
    assert np.all(np.diag(C) == 0) and np.all(C[~np.eye(5, dtype=bool)] > 0)


def test_cost_matrix_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        ot.cost_matrix(np.ones((2, 2)), np.ones((2, 3)))


# -- sinkhorn ------------------------------------------------------------------

def test_sinkhorn_zero_cost_is_uniform():
    plan = ot.sinkhorn(_cost(np.zeros((2, 2))))
    np.testing.assert_allclose(plan.pi, 0.25, atol=1e-12)


def test_sinkhorn_small_epsilon_matches_oracle():
    C = _cost([[0.0, 1.0], [1.0, 0.0]])
    plan = ot.sinkhorn(C, 1e-3)
    target = brute_force_ot(C.C)
    np.testing.assert_allclose(target, [[0.5, 0], [0, 0.5]])
    assert 0.5 * np.abs(plan.pi - target).sum() < 1e-3


def _plain_sinkhorn(C, eps, iters=20_000):
    # textbook scaling iterations; fine at large eps where nothing underflows
    K = np.exp(-C / eps)
    a = np.full(C.shape[0], 1 / C.shape[0])
    b = np.full(C.shape[1], 1 / C.shape[1])
    v = np.ones_like(b)
    for _ in range(iters):
        u = a / (K @ v)
        v = b / (K.T @ u)
    return u[:, None] * K * v[None, :]


def test_sinkhorn_large_epsilon_matches_reference():
    C = ot.cost_matrix(*np.random.default_rng(1).normal(size=(2, 6, 3)))
    plan = ot.sinkhorn(C, 100.0)
    np.testing.assert_allclose(plan.pi, _plain_sinkhorn(C.C, plan.epsilon), atol=1e-12)
    # the gap to a b^T is first order in C / eps, not zero
    assert np.abs(plan.pi - 1 / 36).max() < 2 * C.C.max() / plan.epsilon / 36


def test_sinkhorn_huge_epsilon_is_outer_product():
    C = ot.cost_matrix(*np.random.default_rng(1).normal(size=(2, 6, 3)))
    plan = ot.sinkhorn(C, 1e5)
    np.testing.assert_allclose(plan.pi, np.full((6, 6), 1 / 36), atol=1e-6)


def test_sinkhorn_rejects_bad_input():
    with pytest.raises(ValueError):
        ot.sinkhorn(_cost([[0.0, np.inf]]))
    with pytest.raises(ValueError):
        ot.sinkhorn(_cost([[0.0, 1.0]]), 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 30), m=st.integers(1, 30))
@example(seed=45931, n=23, m=20)  # rounding once produced a -2e-18 entry here
def test_sinkhorn_marginals_and_positivity(seed, n, m):
    rng = np.random.default_rng(seed)
    C = ot.cost_matrix(rng.normal(size=(n, 4)), rng.normal(size=(m, 4)) + 0.5)
    plan = ot.sinkhorn(C)
    assert plan.marginal_error() < 1e-6  # rounding makes every plan feasible
    assert np.all(plan.pi > 0)
    raw = ot.sinkhorn(C, round_marginals=False)
    if raw.converged:
        assert raw.marginal_error() < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_entropic_cost_monotone_in_epsilon(seed):
    rng = np.random.default_rng(seed)
    C = ot.cost_matrix(rng.normal(size=(10, 2)), rng.normal(size=(10, 2)))
    costs = [ot.transport_cost(ot.sinkhorn(C, s, max_iters=5000).pi, C) for s in (0.01, 0.1, 1.0)]
    assert costs[0] <= costs[1] + 1e-9 <= costs[2] + 2e-9


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 8), m=st.integers(1, 8))
def test_sinkhorn_never_beats_oracle(seed, n, m):
    rng = np.random.default_rng(seed)
    C = ot.cost_matrix(rng.normal(size=(n, 2)), rng.normal(size=(m, 2)))
    exact = brute_force_ot(C.C)
    plan = ot.sinkhorn(C, 1e-3)
    assert ot.transport_cost(plan.pi, C) >= ot.transport_cost(exact, C) - 1e-12


# -- trimming ------------------------------------------------------------------

def test_trim_identity_at_full_mass():
    plan = ot.sinkhorn(ot.cost_matrix(*np.random.default_rng(2).normal(size=(2, 5, 2))))
    t = ot.trim_plan(plan, ot.cost_matrix(np.zeros((5, 2)), np.zeros((5, 2))), 1.0)
    np.testing.assert_array_equal(t.pi_trim, plan.pi)
    assert not t.fallback_rows and not t.zeroed.any()


def test_trim_cannot_remove_anything():
    t = ot.trim_plan(_plan([[0.5, 0.0], [0.0, 0.5]]), _cost([[0, 9], [9, 0]]), 0.8)
    np.testing.assert_array_equal(t.pi_trim, [[0.5, 0], [0, 0.5]])


def test_trim_hand_trace():
    t = ot.trim_plan(_plan(np.full((2, 2), 0.25)), _cost([[0, 1], [2, 3]]), 0.6)
    np.testing.assert_array_equal(t.pi_trim, [[0.25, 0.25], [0.25, 0.0]])
    assert t.kept_mass == 0.75 and not t.fallback_rows


def test_trim_tie_order_is_lexicographic():
    t = ot.trim_plan(_plan(np.full((2, 2), 0.25)), _cost([[5, 5], [5, 5]]), 0.7)
    assert t.zeroed.tolist() == [[True, False], [False, False]]


def test_trim_rejects_bad_keep_mass():
    plan = _plan([[1.0]])
    for bad in (0.0, 1.5):
        with pytest.raises(ValueError):
            ot.trim_plan(plan, _cost([[0.0]]), bad)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6), keep=st.floats(0.05, 1.0))
def test_trim_threshold_property(seed, keep):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(2, 12, size=2)
    C = _cost(rng.integers(0, 6, size=(n, m)).astype(float))  # integer costs force ties
    plan = ot.sinkhorn(C)
    t = ot.trim_plan(plan, C, keep)
    assert t.kept_mass >= keep * plan.pi.sum() - 1e-12
    kept = t.pi_trim >= ot.MASS_FLOOR
    if t.zeroed.any() and kept.any():
        assert C.C[kept].max() <= C.C[t.zeroed].min()
        # at the boundary cost, zeroed cells precede kept ones in (i, j) order
        edge = C.C[t.zeroed].min()
        if C.C[kept].max() == edge:
            z = np.flatnonzero((C.C == edge).ravel() & t.zeroed.ravel())
            k = np.flatnonzero((C.C == edge).ravel() & kept.ravel())
            assert z.max() < k.min()


# -- projection ----------------------------------------------------------------

def test_projection_examples():
    T = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]])
    S = np.array([[9.0, 9.0], [7.0, 7.0], [5.0, 5.0]])
    pi = np.array([[1 / 9] * 3, [0.0, 1 / 3, 0.0], [0.0, 0.0, 0.0]])
    out = ot.barycentric_project(pi, T, S)
    np.testing.assert_allclose(out[0], T.mean(0))
    np.testing.assert_array_equal(out[1], T[1])
    np.testing.assert_array_equal(out[2], S[2])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), keep=st.floats(0.3, 1.0))
def test_projection_in_target_hull(seed, keep):
    rng = np.random.default_rng(seed)
    S, T = rng.normal(size=(12, 3)), rng.normal(size=(9, 3)) * 2
    C = ot.cost_matrix(S, T)
    t = ot.trim_plan(ot.sinkhorn(C), C, keep)
    out = ot.barycentric_project(t, T, S)
    ok = [i for i in range(12) if i not in t.fallback_rows]
    assert np.all(out[ok] >= T.min(0) - 1e-9) and np.all(out[ok] <= T.max(0) + 1e-9)
    for i in t.fallback_rows:
        np.testing.assert_array_equal(out[i], S[i])


def test_projection_shape_check():
    with pytest.raises(ValueError):
        ot.barycentric_project(np.ones((2, 3)), np.ones((4, 2)), np.ones((2, 2)))
