"""Shrinkage covariance baselines.

Both estimators return ``(1 - a) S + a F`` for a target ``F`` and an
analytically chosen intensity ``a`` clipped to [0, 1]:

* :func:`fit_lw` shrinks toward ``(tr S / K) I`` with the Ledoit-Wolf
  (2004) intensity.
* :func:`fit_ss` shrinks toward ``diag(S)`` with the Schafer-Strimmer
  (2005) intensity for their "diagonal, unequal variance" target.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .rrcov import SampleCov

logger = logging.getLogger(__name__)

__all__ = ["ShrinkEstimate", "SS_VARIANTS", "fit_lw", "fit_ss"]


SS_VARIANTS = ("diag", "corpcor")


@dataclass(frozen=True)
class ShrinkEstimate:
    matrix: np.ndarray
    intensity: float
    target_kind: str
    variant: str = ""
    variance_intensity: float = 0.0


def _prepare(S: SampleCov, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != S.K:
        raise InvalidInput(f"Z must be T x {S.K}")
    if Z.shape[0] < 2:
        raise InvalidInput("need at least 2 observations")
    if S.centered:
        Z = Z - Z.mean(axis=0)
    return Z


def _clip(a: float, name: str) -> float:
    if not np.isfinite(a):
        logger.info("%s intensity undefined; using 1", name)
        return 1.0
    if a < 0.0 or a > 1.0:
        logger.info("%s intensity %.4g clipped to [0, 1]", name, a)
    return float(min(max(a, 0.0), 1.0))


def _combine(S: np.ndarray, target: np.ndarray, a: float) -> np.ndarray:
    if a == 1.0:
        return target.copy()
    if a == 0.0:
        return S.copy()
    return (1.0 - a) * S + a * target


def fit_lw(S: SampleCov, Z) -> ShrinkEstimate:
    """Ledoit-Wolf shrinkage toward a scaled identity.

    With ``m = tr(S)/K``, ``d2 = ||S - m I||^2`` and
    ``b2 = min(d2, T^-2 sum_t ||z_t z_t' - S||^2)`` the intensity is
    ``b2 / d2``. Both norms carry the same normalization, so it cancels.
    """
    Z = _prepare(S, Z)
    T, K = Z.shape
    Smat = np.asarray(S.S)
    mu = np.trace(Smat) / K
    target = mu * np.eye(K)
    d2 = float(np.sum((Smat - target) ** 2))
    if d2 == 0.0:
        return ShrinkEstimate(target, 1.0, "scaled_identity", "lw")
    # sum_t ||z z' - S||_F^2 = sum_t ||z_t||^4 - T ||S||_F^2  when S = Z'Z/T
    sq = np.einsum("ti,ti->t", Z, Z)
    b2_bar = (float(np.sum(sq**2)) - T * float(np.sum(Smat**2))) / T**2
    b2 = min(max(b2_bar, 0.0), d2)
    a = _clip(b2 / d2, "LW")
    return ShrinkEstimate(_combine(Smat, target, a), a, "scaled_identity", "lw")


def _product_variance(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Estimated variance of each entry of ``M = X'X/T``: the unbiased
    empirical variance of the products ``x_ti x_tj`` divided by T."""
    T = X.shape[0]
    X2 = X * X
    # sum_t (w_tij - M_ij)^2 = sum_t x_ti^2 x_tj^2 - T M_ij^2
    return (X2.T @ X2 - T * M * M) / (T * (T - 1))


def fit_ss(S: SampleCov, Z, variant: str = "diag") -> ShrinkEstimate:
    """Schafer-Strimmer shrinkage toward a diagonal target.

    ``variant="diag"`` shrinks S toward ``diag(S)`` with intensity
    ``sum_{i!=j} Var(s_ij) / sum_{i!=j} s_ij^2``. Variances are untouched.

    ``variant="corpcor"`` applies that rule to standardized data (shrinking
    correlations toward zero) and separately shrinks the variances toward
    their median with ``sum_i Var(s_ii) / sum_i (s_ii - median)^2``, as the
    R package corpcor does. The result is no longer a single convex
    combination of S and a fixed target; ``intensity`` holds the
    correlation intensity and ``variance_intensity`` the other one.
    """
    if variant not in SS_VARIANTS:
        raise InvalidInput(f"unknown variant {variant!r}; choose from {SS_VARIANTS}")
    Z = _prepare(S, Z)
    T, K = Z.shape
    Smat = np.asarray(S.S)
    off = ~np.eye(K, dtype=bool)

    if variant == "diag":
        target = np.diag(np.diag(Smat))
        num = float(np.sum(_product_variance(Z, Smat)[off]))
        den = float(np.sum(Smat[off] ** 2))
        a = 1.0 if den == 0.0 else _clip(num / den, "SS")
        out = _combine(Smat, target, a)
        # the target shares the diagonal; keep it bit-exact
        np.fill_diagonal(out, np.diag(Smat))
        return ShrinkEstimate(out, a, "diag_unequal", variant)

    v = np.diag(Smat).copy()
    if np.any(v <= 0):
        raise InvalidInput("a series has zero variance")
    sd = np.sqrt(v)
    X = Z / sd
    R = X.T @ X / T
    den = float(np.sum(R[off] ** 2))
    a = 1.0 if den == 0.0 else _clip(float(np.sum(_product_variance(X, R)[off])) / den, "SS")

    W = Z * Z
    var_v = (np.sum(W * W, axis=0) - T * v * v) / (T * (T - 1))
    med = float(np.median(v))
    spread = float(np.sum((v - med) ** 2))
    b = 1.0 if spread == 0.0 else _clip(float(np.sum(var_v)) / spread, "SS variance")

    v_shrunk = (1.0 - b) * v + b * med
    R_shrunk = (1.0 - a) * R
    np.fill_diagonal(R_shrunk, 1.0)
    s = np.sqrt(v_shrunk)
    out = R_shrunk * np.outer(s, s)
    return ShrinkEstimate(0.5 * (out + out.T), a, "diag_unequal", variant, b)
