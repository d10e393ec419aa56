import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from varcov.errors import InvalidInput, NotPositiveDefinite
from varcov.linalg import chol, condition_number, eigh, kron, symmetrize, unvec, vec


def _check_eigensystem(m, es):
    K = m.shape[0]
    assert np.all(np.diff(es.values) <= 0)
    assert np.max(np.abs(es.vectors.T @ es.vectors - np.eye(K))) < 1e-10
    recon = es.vectors @ np.diag(es.values) @ es.vectors.T
    assert np.linalg.norm(recon - m) <= 1e-8 * max(np.linalg.norm(m), 1e-300)
    for col in es.vectors.T:
        i = np.argmax(np.abs(col))
        assert col[i] >= 0


def test_eigh_identity():
    es = eigh(np.eye(3))
    np.testing.assert_array_equal(es.values, [1, 1, 1])
    _check_eigensystem(np.eye(3), es)


def test_eigh_diagonal_is_signed_permutation():
    es = eigh(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(es.values, [3, 2, 1])
    np.testing.assert_allclose(np.abs(es.vectors), np.eye(3)[:, [0, 2, 1]], atol=1e-15)
    _check_eigensystem(np.diag([3.0, 1.0, 2.0]), es)


def test_eigh_two_by_two():
    es = eigh([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(es.values, [3, 1], atol=1e-14)
    np.testing.assert_allclose(es.vectors[:, 0], np.ones(2) / np.sqrt(2), atol=1e-14)


def test_eigh_uses_lower_triangle_only():
    m = np.array([[2.0, 99.0], [1.0, 2.0]])
    np.testing.assert_allclose(eigh(m).values, [3, 1], atol=1e-14)


def test_eigh_deterministic(rng):
    m = symmetrize(rng.standard_normal((6, 6)))
    a, b = eigh(m), eigh(m.copy())
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.vectors, b.vectors)


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_eigh_rejects_non_finite(bad):
    m = np.eye(2)
    m[1, 0] = bad
    with pytest.raises(InvalidInput):
        eigh(m)


def test_symmetrize_rejects_non_square():
    with pytest.raises(InvalidInput):
        symmetrize(np.zeros((2, 3)))
    with pytest.raises(InvalidInput):
        symmetrize(np.zeros((0, 0)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(1, 10)).map(lambda t: (t[0], t[0])),
              elements=st.floats(-10, 10)))
def test_eigh_property(a):
    m = symmetrize(a)
    _check_eigensystem(m, eigh(m))


def test_kron_examples():
    B = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = kron(np.eye(2), B)
    np.testing.assert_array_equal(out[:2, :2], B)
    np.testing.assert_array_equal(out[2:, 2:], B)
    np.testing.assert_array_equal(out[:2, 2:], 0)
    P = kron([[0, 1], [1, 0]], np.eye(2))
    np.testing.assert_array_equal(P[:2, 2:], np.eye(2))
    np.testing.assert_array_equal(P[2:, :2], np.eye(2))
    np.testing.assert_array_equal(kron([[1, 2]], [[3], [4]]), [[3, 6], [4, 8]])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4),
       st.integers(0, 2**31 - 1))
def test_kron_vec_identity(ra, ca, rb, cb, seed):
    # vec(B X A') = (A kron B) vec(X)
    g = np.random.default_rng(seed)
    A = g.standard_normal((ra, ca))
    B = g.standard_normal((rb, cb))
    X = g.standard_normal((cb, ca))
    lhs = vec(B @ X @ A.T)
    rhs = kron(A, B) @ vec(X)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_vec_and_unvec():
    m = np.array([[1, 3], [2, 4]])
    np.testing.assert_array_equal(vec(m), [1, 2, 3, 4])
    col = np.array([5.0, 6.0, 7.0])
    np.testing.assert_array_equal(vec(col[:, None]), col)
    np.testing.assert_array_equal(unvec(vec(m), 2, 2), m)
    with pytest.raises(InvalidInput):
        unvec([1, 2, 3], 2, 2)


def test_chol_examples():
    np.testing.assert_array_equal(chol(np.eye(4)), np.eye(4))
    np.testing.assert_allclose(chol(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    L = chol(m)
    assert np.allclose(L, np.tril(L))
    assert np.max(np.abs(L @ L.T - m)) < 1e-12


def test_chol_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        chol(np.diag([1.0, -1.0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_chol_round_trip(K, seed):
    G = np.random.default_rng(seed).standard_normal((K, K))
    m = G.T @ G + 1e-3 * np.eye(K)
    L = chol(m)
    assert np.linalg.norm(L @ L.T - m) <= 1e-8 * np.linalg.norm(m)


def test_condition_number():
    assert condition_number(np.eye(5)) == 1.0
    assert condition_number(np.diag([10.0, 1.0])) == pytest.approx(10.0)
    v = np.array([1.0, 2.0, 3.0])
    assert condition_number(np.outer(v, v)) == float("inf")
