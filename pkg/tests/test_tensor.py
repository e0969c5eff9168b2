import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mmot import tensor as tz

T8 = np.arange(1.0, 9.0).reshape(2, 2, 2)


def brute_marginal(T, k):
    out = np.zeros(T.shape[k])
    for idx in itertools.product(*map(range, T.shape)):
        out[idx[k]] += T[idx]
    return out


def test_marginal_examples():
    U = np.full((2, 2, 2), 1 / 8)
    for k in range(3):
        np.testing.assert_allclose(tz.marginal(U, k), [0.5, 0.5])
    np.testing.assert_array_equal(tz.marginal(T8, 0), [10, 26])
    a, b, c = np.array([0.2, 0.8]), np.array([0.3, 0.7]), np.array([0.6, 0.4])
    np.testing.assert_allclose(tz.marginal(tz.outer([a, b, c]), 0), a)


def test_marginal_matches_enumeration(rng):
    T = rng.random((3, 4, 2))
    for k in range(3):
        np.testing.assert_allclose(tz.marginal(T, k), brute_marginal(T, k), rtol=1e-14)


def test_axis_out_of_range():
    with pytest.raises(IndexError):
        tz.marginal(T8, 3)
    with pytest.raises(IndexError):
        tz.marginal(T8, -1)


def test_inner_and_norms():
    assert tz.inner(T8, np.zeros_like(T8)) == 0
    assert tz.inner(np.ones((2, 2, 2)), T8) == 36
    U = np.full((2, 2, 2), 1 / 8)
    assert tz.inner(U, U) == pytest.approx(1 / 8)
    assert tz.norm1(U) == pytest.approx(1)
    assert tz.norm_inf(T8) == 8
    assert tz.norm1(np.zeros(3)) == 0
    with pytest.raises(ValueError):
        tz.inner(T8, np.ones((2, 2)))


def test_lse_marginal_examples():
    sc = np.zeros((2, 2, 2))
    beta = np.zeros((3, 2))
    for k in range(3):
        np.testing.assert_allclose(tz.lse_marginal(beta, sc, k), np.log(4))
    c = 1.7
    np.testing.assert_allclose(tz.lse_marginal(beta, np.full((2, 2, 2), c), 1), np.log(4) - c)


def test_lse_marginal_matches_materialized(rng):
    for _ in range(5):
        beta = rng.normal(size=(3, 2))
        sc = rng.random((2, 2, 2)) * 3
        B = np.exp(beta[0][:, None, None] + beta[1][None, :, None] + beta[2][None, None, :] - sc)
        for k in range(3):
            np.testing.assert_allclose(np.exp(tz.lse_marginal(beta, sc, k)), brute_marginal(B, k),
                                       rtol=1e-12)


def test_lse_no_overflow():
    beta = np.full((3, 2), 230.0)
    out = tz.lse_marginal(beta, np.zeros((2, 2, 2)), 0)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, 690 + np.log(4))


def test_logsumexp_all_neg_inf():
    assert tz.logsumexp(np.full(3, -np.inf)) == -np.inf
    out = tz.logsumexp(np.array([[-np.inf, -np.inf], [0.0, 0.0]]), axis=1)
    assert out[0] == -np.inf and out[1] == pytest.approx(np.log(2))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3)),
              elements=st.floats(0, 10)))
def test_marginal_sums_to_total(T):
    for k in range(T.ndim):
        assert tz.marginal(T, k).sum() == pytest.approx(tz.norm1(T), rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2))
def test_marginal_linear(a, b, k):
    rng = np.random.default_rng(7)
    T1, T2 = rng.random((3, 2, 4)), rng.random((3, 2, 4))
    np.testing.assert_allclose(tz.marginal(a * T1 + b * T2, k),
                               a * tz.marginal(T1, k) + b * tz.marginal(T2, k), atol=1e-12)


def test_deterministic(rng):
    T = rng.random((5, 5, 5))
    assert tz.marginal(T, 1).tobytes() == tz.marginal(T.copy(), 1).tobytes()


def test_shape_checks():
    with pytest.raises(ValueError):
        tz.check_shape([2, 0])
    with pytest.raises(ValueError):
        tz.as_tensor([1, 2, 3], sizes=[2, 2])


@pytest.mark.parametrize("inline", [True, False])
def test_tensor_file_roundtrip(tmp_path, rng, inline):
    T = rng.random((3, 2, 4))
    path = tz.save_tensor(tmp_path / "t.json", T, inline=inline)
    back = tz.load_tensor(path)
    assert back.shape == T.shape
    assert back.tobytes() == T.tobytes()
