import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from genrotda import mmd
from genrotda.mmd import KernelSpec

UNIT = KernelSpec(1.0)
finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def test_bandwidth_examples():
    assert mmd.median_bandwidth([[2.0, 2.0]], [[2.0, 2.0]]) == 1e-8
    assert mmd.median_bandwidth([[0.0]], [[3.0]]) == 3.0
    assert mmd.median_bandwidth([[0.0], [1.0]], [[2.0]]) == 1.0


def test_bandwidth_floor_enforced():
    with pytest.raises(ValueError):
        KernelSpec(1e-9)


def test_closed_form_pair():
    for t in (0.5, 2.0, 3.0):
        assert mmd.mmd2([[0.0]], [[t]], UNIT) == pytest.approx(2 * (1 - np.exp(-t * t / 2)), abs=1e-14)
    assert mmd.mmd2([[0.0]], [[2.0]], UNIT) == pytest.approx(1.7293294335267746, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(X=arrays(np.float64, (6, 3), elements=finite), Y=arrays(np.float64, (4, 3), elements=finite),
       h=st.floats(0.2, 5))
def test_identity_and_symmetry(X, Y, h):
    k = KernelSpec(h)
    assert abs(mmd.mmd2(X, X, k)) <= 1e-12
    assert mmd.mmd2(X, Y, k) == mmd.mmd2(Y, X, k)
    assert mmd.mmd2(X, Y, k) >= -1e-12


def test_monotone_in_translation():
    base = np.random.default_rng(0).normal(size=(30, 1))
    vals = [mmd.mmd2(base + shift, base, UNIT) for shift in (3.0, 2.0, 1.0, 0.5, 0.1, 0.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.normal(size=(5, 3)), rng.normal(size=(5, 3)) + 0.3
    k = KernelSpec(1.3)
    _, grad = mmd.mmd2_and_grad(X, Y, k)
    fd = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += 1e-5
        Xm[idx] -= 1e-5
        fd[idx] = (mmd.mmd2(Xp, Y, k) - mmd.mmd2(Xm, Y, k)) / 2e-5
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4


def test_value_matches_plain_function():
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(7, 2)), rng.normal(size=(9, 2))
    assert mmd.mmd2_and_grad(X, Y, UNIT)[0] == pytest.approx(mmd.mmd2(X, Y, UNIT), abs=1e-14)


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        mmd.mmd2(np.ones((2, 2)), np.ones((2, 3)), UNIT)


# -- kernel mean matching -------------------------------------------------------

def test_kmm_same_sample_is_uniform():
    S = np.random.default_rng(2).normal(size=(80, 2))
    w = mmd.kmm_weights(S, S)
    assert np.abs(w - 1).max() < 0.05


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), bound=st.floats(1.0, 20.0))
def test_kmm_constraints(seed, bound):
    rng = np.random.default_rng(seed)
    S, T = rng.normal(size=(25, 2)), rng.normal(size=(15, 2)) + rng.normal(size=2)
    w = mmd.kmm_weights(S, T, bound=bound, iters=100)
    assert w.min() >= 0 and w.max() <= bound
    assert abs(w.mean() - 1) < 1e-6


def test_kmm_prefers_matching_cluster():
    rng = np.random.default_rng(3)
    S = np.concatenate([rng.normal(-1, 0.1, 40), rng.normal(1, 0.1, 40)])[:, None]
    T = rng.normal(1, 0.1, 50)[:, None]
    w, trace = mmd.kmm_weights(S, T, return_trace=True)
    assert w[40:].mean() > w[:40].mean()
    assert trace[-1] < trace[0]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_kmm_objective_non_increasing(seed):
    rng = np.random.default_rng(seed)
    S, T = rng.normal(size=(30, 3)), rng.normal(size=(20, 3)) + 0.5
    _, trace = mmd.kmm_weights(S, T, iters=200, return_trace=True)
    assert np.all(np.diff(trace) <= 0)


def test_project_capped_mean_is_projection():
    rng = np.random.default_rng(4)
    v = rng.normal(size=12) * 3
    w = mmd._project_capped_mean(v, 4.0)
    assert abs(w.mean() - 1) < 1e-12 and w.min() >= 0 and w.max() <= 4
    # no feasible point is closer to v
    for _ in range(200):
        u = mmd._project_capped_mean(rng.uniform(0, 4, 12), 4.0)
        assert np.linalg.norm(v - w) <= np.linalg.norm(v - u) + 1e-9
