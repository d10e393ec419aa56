"""Reduced-rank covariance estimation.

The model is ``Sigma = U diag(lam) U' + sigma2 I`` with ``U`` a K x d
column-orthonormal matrix. Its Gaussian maximum likelihood estimate has a
closed form in terms of the eigendecomposition of the sample covariance:
the top ``d`` eigenvectors give ``U``, the mean of the trailing ``K - d``
eigenvalues gives ``sigma2``, and ``lam_i = c_i - sigma2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import InsufficientData, InvalidInput, InvalidRank, SingularEstimate
from .linalg import EigenSystem, eigh, symmetrize

logger = logging.getLogger(__name__)

__all__ = [
    "SampleCov",
    "RRCovEstimate",
    "sample_cov",
    "fit_rr",
    "fit_isotropic",
    "neg2_loglik_avg",
    "n_params",
    "bic",
    "select_rank",
    "latent_scores",
    "contemporaneous_cov",
    "correlation_table",
]

# Relative thresholds (scaled by the largest sample eigenvalue).
_ZERO_TOL = 1e-12
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class SampleCov:
    """Second-moment matrix ``S = Z'Z / T`` of T observations."""

    S: np.ndarray
    T: int
    centered: bool = False

    def __post_init__(self):
        S = symmetrize(self.S)
        if not np.all(np.isfinite(S)):
            raise InvalidInput("sample covariance has non-finite entries")
        S.setflags(write=False)
        object.__setattr__(self, "S", S)

    @property
    def K(self) -> int:
        return self.S.shape[0]

    @cached_property
    def eig(self) -> EigenSystem:
        return eigh(self.S)


@dataclass(frozen=True)
class RRCovEstimate:
    """Fitted reduced-rank covariance ``U diag(lam) U' + sigma2 I``.

    ``d`` is the effective rank (number of strictly positive ``lam``);
    ``requested_rank`` is the rank that was asked for and is the one used
    when counting parameters.
    """

    U: np.ndarray
    lam: np.ndarray
    sigma2: float
    n_samples: int
    requested_rank: int
    tie: bool = False

    @property
    def K(self) -> int:
        return self.U.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    @property
    def invertible(self) -> bool:
        return self.sigma2 > 0

    def full_matrix(self) -> np.ndarray:
        out = (self.U * self.lam) @ self.U.T
        out = 0.5 * (out + out.T)
        out[np.diag_indices_from(out)] += self.sigma2
        return out

    def inverse(self) -> np.ndarray:
        """Woodbury inverse ``(I + U diag(-lam/(lam+s2)) U') / s2``."""
        self._require_invertible()
        w = -self.lam / (self.lam + self.sigma2)
        out = (self.U * w) @ self.U.T
        out = 0.5 * (out + out.T)
        out[np.diag_indices_from(out)] += 1.0
        return out / self.sigma2

    def logdet(self) -> float:
        self._require_invertible()
        return (self.K - self.d) * math.log(self.sigma2) + float(
            np.sum(np.log(self.lam + self.sigma2))
        )

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of :meth:`full_matrix` in descending order."""
        tail = np.full(self.K - self.d, self.sigma2)
        return np.concatenate([self.lam + self.sigma2, tail])

    def _require_invertible(self):
        if not self.invertible:
            raise SingularEstimate("isotropic variance is zero; estimate is singular")


def sample_cov(Z, center: bool = True) -> SampleCov:
    """Sample covariance with divisor T.

    Parameters
    ----------
    Z : array_like, shape (T, K)
        Observations in rows.
    center : bool
        Subtract the column means before forming cross products.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2:
        raise InvalidInput("Z must be a T x K matrix")
    T, K = Z.shape
    if T < 2:
        raise InsufficientData(f"need at least 2 observations, got {T}")
    if K < 1:
        raise InvalidInput("Z has no columns")
    if not np.all(np.isfinite(Z)):
        raise InvalidInput("Z has non-finite entries")
    if center:
        Z = Z - Z.mean(axis=0)
    return SampleCov(Z.T @ Z / T, T, center)


def _check_sample(S) -> SampleCov:
    if not isinstance(S, SampleCov):
        raise InvalidInput("expected a SampleCov; build one with sample_cov()")
    return S


def fit_rr(S: SampleCov, d: int) -> RRCovEstimate:
    """Closed-form maximum likelihood fit of the rank-`d` model.

    A returned estimate may be non-invertible (``sigma2 == 0``) when the
    trailing sample eigenvalues vanish, e.g. ``d >= T`` without centering.
    Such an estimate is flagged; likelihood evaluation on it raises
    :class:`SingularEstimate`.
    """
    S = _check_sample(S)
    K = S.K
    if not isinstance(d, (int, np.integer)) or not 1 <= d <= K - 1:
        raise InvalidRank(f"rank must lie in [1, {K - 1}], got {d}")
    d = int(d)
    c, vectors = S.eig
    scale = max(c[0], np.finfo(float).tiny)

    sigma2 = float(np.mean(c[d:]))
    if sigma2 <= _ZERO_TOL * scale:
        logger.debug("trailing eigenvalues vanish at d=%d; estimate is singular", d)
        sigma2 = 0.0
    lam = c[:d] - sigma2
    d_eff = int(np.sum(lam > _ZERO_TOL * scale))
    if d_eff < d:
        logger.debug("effective rank reduced from %d to %d", d, d_eff)
    tie = bool(abs(c[d - 1] - c[d]) <= _TIE_TOL * scale)
    return RRCovEstimate(
        U=vectors[:, :d_eff].copy(),
        lam=lam[:d_eff].copy(),
        sigma2=sigma2,
        n_samples=S.T,
        requested_rank=d,
        tie=tie,
    )


def fit_isotropic(S: SampleCov) -> RRCovEstimate:
    """Rank-zero fit ``mean(c) * I``; the only option when K == 1."""
    S = _check_sample(S)
    c = S.eig.values
    sigma2 = float(np.mean(c))
    if sigma2 <= _ZERO_TOL * max(c[0], np.finfo(float).tiny):
        sigma2 = 0.0
    return RRCovEstimate(
        U=np.zeros((S.K, 0)),
        lam=np.zeros(0),
        sigma2=sigma2,
        n_samples=S.T,
        requested_rank=0,
    )


def _fit(S: SampleCov, d: int) -> RRCovEstimate:
    return fit_isotropic(S) if d == 0 else fit_rr(S, d)


def neg2_loglik_avg(est: RRCovEstimate, S: SampleCov) -> float:
    """``log|Sigma| + tr(Sigma^-1 S)``, i.e. -2/T times the log-likelihood
    up to an additive constant. Uses the Woodbury form; no dense inverse.
    """
    S = _check_sample(S)
    if est.K != S.K:
        raise InvalidInput(f"dimension mismatch: estimate {est.K}, data {S.K}")
    est._require_invertible()
    s2 = est.sigma2
    w = -est.lam / (est.lam + s2)
    # u_i' S u_i for each retained direction
    quad = np.sum(est.U * (S.S @ est.U), axis=0)
    trace = (np.trace(S.S) + float(np.dot(w, quad))) / s2
    return est.logdet() + trace


def n_params(K: int, d: int) -> int:
    """Free parameters of the rank-`d` model: ``K d - d(d-1)/2 + 1``."""
    return K * d - d * (d - 1) // 2 + 1


def bic(est: RRCovEstimate, S: SampleCov) -> float:
    T = S.T
    return T * neg2_loglik_avg(est, S) + math.log(T) * n_params(est.K, est.requested_rank)


def select_rank(
    S: SampleCov, candidates: Iterable[int] | None = None
) -> tuple[RRCovEstimate, dict[int, float]]:
    """Fit every candidate rank and keep the minimum-BIC one.

    Parameters
    ----------
    S : SampleCov
    candidates : iterable of int, optional
        Ranks to try. Defaults to ``1, ..., K-1``. Include 0 to let the
        isotropic model compete.

    Returns
    -------
    best : RRCovEstimate
    curve : dict
        ``{d: BIC(d)}`` in increasing ``d``; singular fits map to ``inf``.
    """
    S = _check_sample(S)
    if candidates is None:
        candidates = range(1, S.K)
    ranks = sorted(set(int(d) for d in candidates))
    if not ranks:
        raise InvalidRank("no candidate ranks")
    curve: dict[int, float] = {}
    best = None
    best_bic = math.inf
    for d in ranks:
        est = _fit(S, d)
        value = bic(est, S) if est.invertible else math.inf
        curve[d] = value
        # strict comparison keeps the smaller rank on ties
        if value < best_bic:
            best, best_bic = est, value
    if best is None:
        raise SingularEstimate("every candidate rank gives a singular estimate")
    return best, curve


def latent_scores(est: RRCovEstimate, Z) -> np.ndarray:
    """Rows ``U' Z_t`` of estimated latent variables, shape (T, d)."""
    if est.d == 0:
        raise InvalidRank("rank-zero estimate has no latent dimensions")
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.shape[1] != est.K:
        raise InvalidInput(f"Z has {Z.shape[1]} columns, estimate has K={est.K}")
    return Z @ est.U


def contemporaneous_cov(est: RRCovEstimate, i: int, j: int) -> float:
    """Conditional covariance of series i and j: ``u_i' diag(lam) u_j``."""
    K = est.K
    if not (0 <= i < K and 0 <= j < K):
        raise InvalidInput(f"indices must lie in [0, {K})")
    if i == j:
        raise InvalidInput("i == j is a variance; read it from full_matrix()")
    return float(np.dot(est.U[i] * est.lam, est.U[j]))


def correlation_table(scores, max_lag: int = 20) -> list[tuple[int, int, int, float]]:
    """Auto- and cross-correlations of the columns of `scores`.

    Returns rows ``(i, j, lag, corr)`` for every ordered pair and every lag
    in ``-max_lag..max_lag``, where
    ``corr(i, j, h) = sum_t x_i[t+h] x_j[t] / (T s_i s_j)`` on demeaned
    columns. Mirrored entries share one computed value, so
    ``corr(i, j, h) == corr(j, i, -h)`` holds exactly.
    """
    x = np.asarray(scores, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T, n = x.shape
    if max_lag < 0 or max_lag >= T:
        raise InvalidInput(f"max_lag must lie in [0, {T - 1}]")
    x = x - x.mean(axis=0)
    # lag-0 variances from the same product as the lag-0 cross terms, so
    # every autocorrelation at lag 0 is exactly 1
    c0 = np.diag(x.T @ x / T).copy()
    sd = np.sqrt(c0)
    corr: dict[tuple[int, int, int], float] = {}
    for h in range(max_lag + 1):
        cross = x[h:].T @ x[: T - h] / T
        for i in range(n):
            for j in range(n):
                if i == j:
                    r = cross[i, i] / c0[i]
                else:
                    r = cross[i, j] / (sd[i] * sd[j])
                corr[(i, j, h)] = float(r)
                corr[(j, i, -h)] = float(r)
    return [(i, j, h, corr[(i, j, h)]) for i in range(n) for j in range(n)
            for h in range(-max_lag, max_lag + 1)]
