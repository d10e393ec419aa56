import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varcov.errors import InvalidInput
from varcov.rrcov import SampleCov, sample_cov
from varcov.shrinkage import SS_VARIANTS, fit_lw, fit_ss


def _data(rng, T=40, K=5):
    return rng.standard_normal((T, K)) @ rng.standard_normal((K, K))


def _ss_diag_brute(Z):
    T, K = Z.shape
    S = Z.T @ Z / T
    num = den = 0.0
    for i in range(K):
        for j in range(K):
            if i == j:
                continue
            w = Z[:, i] * Z[:, j]
            num += np.sum((w - w.mean()) ** 2) / (T - 1) / T
            den += S[i, j] ** 2
    return min(max(num / den, 0.0), 1.0)


def _ss_corpcor_brute(Z):
    T, K = Z.shape
    v = np.array([np.mean(Z[:, i] ** 2) for i in range(K)])
    X = Z / np.sqrt(v)
    R = X.T @ X / T
    num = den = 0.0
    for i in range(K):
        for j in range(K):
            if i != j:
                w = X[:, i] * X[:, j]
                num += np.var(w, ddof=1) / T
                den += R[i, j] ** 2
    a = min(max(num / den, 0.0), 1.0)
    med = np.median(v)
    b = sum(np.var(Z[:, i] ** 2, ddof=1) / T for i in range(K)) / np.sum((v - med) ** 2)
    b = min(max(b, 0.0), 1.0)
    vs = (1 - b) * v + b * med
    Rs = (1 - a) * R + a * np.eye(K)
    return Rs * np.sqrt(np.outer(vs, vs)), a, b


def test_lw_matches_reference_implementation(rng):
    sk = pytest.importorskip("sklearn.covariance")
    for T in (8, 30, 300):
        Z = _data(rng, T)
        est = fit_lw(sample_cov(Z, center=False), Z)
        ref, a = sk.ledoit_wolf(Z, assume_centered=True)
        np.testing.assert_allclose(est.matrix, ref, atol=1e-12)
        assert est.intensity == pytest.approx(a, rel=1e-12)


def test_lw_centered_matches_reference(rng):
    sk = pytest.importorskip("sklearn.covariance")
    Z = _data(rng, 25) + 3.0
    est = fit_lw(sample_cov(Z, center=True), Z)
    ref, _ = sk.ledoit_wolf(Z, assume_centered=False)
    np.testing.assert_allclose(est.matrix, ref, atol=1e-12)


def test_lw_target_equals_sample():
    Z = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    S = sample_cov(Z, center=False)
    est = fit_lw(S, Z)
    np.testing.assert_array_equal(est.matrix, 0.5 * np.eye(2))
    assert est.target_kind == "scaled_identity"


def test_lw_degenerate_variance_gives_target(rng):
    # one observation dominates, so the dispersion estimate exceeds d2
    Z = 1e-3 * rng.standard_normal((200, 6))
    Z[17] = 1e3 * rng.standard_normal(6)
    S = sample_cov(Z, center=False)
    est = fit_lw(S, Z)
    assert est.intensity == 1.0
    np.testing.assert_array_equal(est.matrix, np.trace(S.S) / 6 * np.eye(6))


def test_ss_diag_matches_brute_force(rng):
    for T in (10, 60):
        Z = _data(rng, T)
        est = fit_ss(sample_cov(Z, center=False), Z, "diag")
        a = _ss_diag_brute(Z)
        assert est.intensity == pytest.approx(a, rel=1e-10)
        S = Z.T @ Z / T
        np.testing.assert_allclose(est.matrix, (1 - a) * S + a * np.diag(np.diag(S)), atol=1e-12)


def test_ss_corpcor_matches_brute_force(rng):
    Z = _data(rng, 30, 6)
    est = fit_ss(sample_cov(Z, center=False), Z, "corpcor")
    ref, a, b = _ss_corpcor_brute(Z)
    assert est.intensity == pytest.approx(a, rel=1e-10)
    assert est.variance_intensity == pytest.approx(b, rel=1e-10)
    np.testing.assert_allclose(est.matrix, ref, atol=1e-12)


def test_ss_diagonal_sample_unchanged():
    Z = np.array([[1.0, 0.0], [0.0, 2.0], [-1.0, 0.0], [0.0, -2.0]])
    S = sample_cov(Z, center=False)
    est = fit_ss(S, Z)
    np.testing.assert_array_equal(est.matrix, S.S)


def test_ss_zero_intensity_is_sample(rng, monkeypatch):
    import varcov.shrinkage as sh
    Z = _data(rng)
    S = sample_cov(Z, center=False)
    monkeypatch.setattr(sh, "_product_variance", lambda X, M: np.zeros_like(M))
    est = sh.fit_ss(S, Z)
    assert est.intensity == 0.0
    np.testing.assert_array_equal(est.matrix, S.S)


def test_ss_unknown_variant(rng):
    Z = _data(rng)
    with pytest.raises(InvalidInput):
        fit_ss(sample_cov(Z), Z, "banded")


def test_shape_mismatch(rng):
    Z = _data(rng)
    with pytest.raises(InvalidInput):
        fit_lw(sample_cov(Z), Z[:, :3])


def test_clipping_is_logged(rng, caplog):
    Z = 1e-3 * rng.standard_normal((200, 6))
    Z[17] = 1e3 * rng.standard_normal(6)
    with caplog.at_level(logging.INFO, logger="varcov.shrinkage"):
        fit_lw(sample_cov(Z, center=False), Z)
        fit_ss(sample_cov(Z, center=False), Z)
    assert any("clipped" in r.getMessage() for r in caplog.records)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(2, 8), st.integers(0, 2**31 - 1),
       st.sampled_from(("lw",) + SS_VARIANTS))
def test_estimates_are_psd_and_intensity_clipped(T, K, seed, which):
    g = np.random.default_rng(seed)
    Z = g.standard_normal((T, K)) * g.uniform(0.5, 2.0, K)
    S = sample_cov(Z, center=False)
    est = fit_lw(S, Z) if which == "lw" else fit_ss(S, Z, which)
    assert 0.0 <= est.intensity <= 1.0 and np.isfinite(est.intensity)
    np.testing.assert_array_equal(est.matrix, est.matrix.T)
    assert np.linalg.eigvalsh(est.matrix)[0] >= -1e-10 * np.abs(est.matrix).max()
    if which == "diag":
        off = ~np.eye(K, dtype=bool)
        assert np.all(np.abs(est.matrix[off]) <= np.abs(S.S[off]) + 1e-15)
        np.testing.assert_array_equal(np.diag(est.matrix), np.diag(S.S))
