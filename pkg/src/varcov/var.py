"""VAR(p) models with reduced-rank noise covariance.

Conventions
-----------
``Y`` is a T x K array with time in rows. The coefficient matrices are kept
as an array ``A`` of shape (p, K, K), ``A[k]`` multiplying lag ``k + 1``.
The coefficient vector is ``alpha = vec([A_1, ..., A_p])`` (column stacking
of the K x Kp matrix ``B``), so ``A_k[i, j]`` sits at position
``((k - 1) K + j) K + i``.

For a regression on lags ``L`` (Kp x N) with responses ``Yr`` (K x N),
the GLS estimator under a zero-constraint ``alpha = R gamma`` is evaluated
through ``(L L' kron W)[a, b] = (L L')[c_a, c_b] W[r_a, r_b]`` and
``(L kron W) vec(Yr) = vec(W Yr L')`` so no Kronecker product is formed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import rrcov
from .errors import (
    InsufficientData,
    InvalidInput,
    InvalidRank,
    NonCausalModel,
    NotPositiveDefinite,
    RankDeficientDesign,
)
from .linalg import chol, eigh, unvec, vec
from .rrcov import RRCovEstimate, SampleCov

logger = logging.getLogger(__name__)

__all__ = [
    "ConstraintSpec",
    "RegressionView",
    "VarModel",
    "simulate",
    "build_regression",
    "residuals",
    "fit_ols",
    "fit_constrained",
    "fit_two_step",
    "fit_iterative",
    "select_order",
    "coef_stderr",
    "neg2_loglik",
]

CAUSAL_MARGIN = 1e-12


def _as_data(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2:
        raise InvalidInput("Y must be a T x K matrix")
    if not np.all(np.isfinite(Y)):
        raise InvalidInput("Y has non-finite entries")
    return Y


@dataclass(frozen=True)
class ConstraintSpec:
    """Zero constraints on the VAR coefficients.

    ``free`` lists, in increasing order, the positions of ``alpha`` that are
    estimated; every other coefficient is fixed at zero. This is the sparse
    form of the 0/1 selection matrix ``R`` with one unit per column.
    """

    K: int
    p: int
    free: np.ndarray

    def __post_init__(self):
        free = np.asarray(self.free, dtype=np.int64).ravel()
        n = self.K * self.K * self.p
        if free.size and (free.min() < 0 or free.max() >= n):
            raise InvalidInput(f"free positions must lie in [0, {n})")
        if np.unique(free).size != free.size:
            raise InvalidInput("free positions must be distinct")
        free = np.sort(free)
        free.setflags(write=False)
        object.__setattr__(self, "free", free)

    @classmethod
    def unconstrained(cls, K: int, p: int) -> "ConstraintSpec":
        return cls(K, p, np.arange(K * K * p))

    @classmethod
    def from_triples(cls, triples: Iterable[Sequence[int]], K: int, p: int) -> "ConstraintSpec":
        """Build from 1-indexed ``(lag, row, col)`` triples of free coefficients."""
        pos = []
        for lag, row, col in triples:
            if not (1 <= lag <= p and 1 <= row <= K and 1 <= col <= K):
                raise InvalidInput(f"triple ({lag}, {row}, {col}) out of range for K={K}, p={p}")
            pos.append(position(lag - 1, row - 1, col - 1, K))
        return cls(K, p, np.array(pos, dtype=np.int64))

    @classmethod
    def from_mask(cls, mask) -> "ConstraintSpec":
        """Build from a boolean array of shape (p, K, K), True where free."""
        mask = np.asarray(mask, dtype=bool)
        p, K, _ = mask.shape
        return cls(K, p, np.flatnonzero(vec(_A_to_B(mask))))

    @property
    def m(self) -> int:
        return int(self.free.size)

    @property
    def is_full(self) -> bool:
        return self.m == self.K * self.K * self.p

    def matrix(self) -> np.ndarray:
        """Dense K^2 p x m selection matrix (for small problems and tests)."""
        R = np.zeros((self.K * self.K * self.p, self.m))
        R[self.free, np.arange(self.m)] = 1.0
        return R

    def mask(self) -> np.ndarray:
        flat = np.zeros(self.K * self.K * self.p, dtype=bool)
        flat[self.free] = True
        return _B_to_A(unvec(flat, self.K, self.K * self.p), self.p)

    def triples(self) -> list[tuple[int, int, int]]:
        out = []
        for q in self.free:
            col_b, row = divmod(int(q), self.K)
            lag, col = divmod(col_b, self.K)
            out.append((lag + 1, row + 1, col + 1))
        return out


def position(lag: int, row: int, col: int, K: int) -> int:
    """Index in ``alpha`` of ``A_{lag+1}[row, col]`` (all 0-indexed)."""
    return (lag * K + col) * K + row


def _A_to_B(A: np.ndarray) -> np.ndarray:
    p = A.shape[0]
    if p == 0:
        return np.zeros((A.shape[1], 0), dtype=A.dtype)
    return np.concatenate(list(A), axis=1)


def _B_to_A(B: np.ndarray, p: int) -> np.ndarray:
    K = B.shape[0]
    return np.stack([B[:, k * K:(k + 1) * K] for k in range(p)]) if p else np.zeros((0, K, K), B.dtype)


@dataclass(frozen=True)
class RegressionView:
    """Lagged-regression layout of a series.

    ``L[:, n]`` stacks ``(Y_{t-1}, ..., Y_{t-p})`` for the response
    ``Yr[:, n] = Y_t``, both demeaned by ``mu``.
    """

    L: np.ndarray
    Yr: np.ndarray
    mu: np.ndarray
    p: int

    @property
    def K(self) -> int:
        return self.Yr.shape[0]

    @property
    def T_eff(self) -> int:
        return self.Yr.shape[1]

    @property
    def y(self) -> np.ndarray:
        return vec(self.Yr)


@dataclass(frozen=True)
class VarModel:
    mu: np.ndarray
    A: np.ndarray
    noise_cov: RRCovEstimate | None = None
    constraint: ConstraintSpec | None = None
    fit_meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        mu = np.asarray(self.mu, dtype=float).ravel()
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise InvalidInput("A must have shape (p, K, K)")
        if A.shape[1] != mu.size:
            raise InvalidInput("mu and A disagree on K")
        if self.noise_cov is not None and self.noise_cov.K != mu.size:
            raise InvalidInput("noise covariance has the wrong dimension")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "mu", mu)

    @property
    def K(self) -> int:
        return self.mu.size

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def B(self) -> np.ndarray:
        """Coefficients side by side, K x Kp."""
        return _A_to_B(self.A)

    @property
    def alpha(self) -> np.ndarray:
        return vec(self.B)

    def with_noise(self, est: RRCovEstimate, **meta) -> "VarModel":
        return replace(self, noise_cov=est, fit_meta={**self.fit_meta, **meta})


def _noise_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return chol(cov)
    except NotPositiveDefinite:
        # PSD but singular: factor through the eigendecomposition instead
        values, vectors = eigh(cov)
        return vectors * np.sqrt(np.clip(values, 0.0, None))


def simulate(model: VarModel, T: int, burn_in: int = 100, seed: int | None = 0) -> np.ndarray:
    """Draw a T x K sample path with Gaussian noise.

    The recursion starts from ``mu`` and the first `burn_in` values are
    discarded. Output is a deterministic function of `seed`.
    """
    from .forecast import spectral_radius

    if model.noise_cov is None:
        raise InvalidInput("model has no noise covariance")
    if T < 1 or burn_in < 0:
        raise InvalidInput("T must be positive and burn_in non-negative")
    if model.p and spectral_radius(model) >= 1.0 - CAUSAL_MARGIN:
        raise NonCausalModel("companion matrix has spectral radius >= 1")
    K, p = model.K, model.p
    rng = np.random.default_rng(seed)
    F = _noise_factor(model.noise_cov.full_matrix())
    n = T + burn_in
    Z = rng.standard_normal((n, K)) @ F.T
    X = np.zeros((n + p, K))
    for t in range(n):
        acc = Z[t].copy()
        for k in range(p):
            acc += model.A[k] @ X[p + t - k - 1]
        X[p + t] = acc
    return X[p + burn_in:] + model.mu


def build_regression(Y, p: int, start: int | None = None, demean: bool = True) -> RegressionView:
    """Arrange a series for lag-`p` regression.

    Parameters
    ----------
    Y : array_like, shape (T, K)
    p : int
        Number of lags.
    start : int, optional
        0-based index of the first response; defaults to `p` so that every
        predictor is observed. Larger values let several orders share one
        estimation sample.
    demean : bool
        Subtract the full-sample mean first (stored as ``mu``).
    """
    Y = _as_data(Y)
    T, K = Y.shape
    if p < 0:
        raise InvalidInput("order must be non-negative")
    start = p if start is None else int(start)
    if start < p:
        raise InvalidInput("start must be at least p")
    if T <= start:
        raise InsufficientData(f"need more than {start} observations, got {T}")
    mu = Y.mean(axis=0) if demean else np.zeros(K)
    Yc = Y - mu
    Yr = Yc[start:].T.copy()
    if p == 0:
        L = np.zeros((0, T - start))
    else:
        L = np.concatenate([Yc[start - k:T - k].T for k in range(1, p + 1)], axis=0)
    return RegressionView(L, Yr, mu, p)


def residuals(view: RegressionView, A) -> np.ndarray:
    """Residual matrix ``Yr - B L`` (K x N)."""
    B = _A_to_B(np.asarray(A, dtype=float))
    if view.p == 0:
        return view.Yr.copy()
    return view.Yr - B @ view.L


def _residual_cov(view: RegressionView, A) -> SampleCov:
    E = residuals(view, A)
    return SampleCov(E @ E.T / view.T_eff, view.T_eff, centered=False)


def _ols_A(view: RegressionView) -> np.ndarray:
    K, p = view.K, view.p
    if p == 0:
        return np.zeros((0, K, K))
    G = view.L @ view.L.T
    try:
        factor = cho_factor(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientDesign("L L' is singular") from exc
    B = cho_solve(factor, view.L @ view.Yr.T).T
    return _B_to_A(B, p)


def fit_ols(Y, p: int) -> VarModel:
    """Equation-by-equation least squares; no noise covariance attached."""
    view = build_regression(Y, p)
    return VarModel(view.mu, _ols_A(view), fit_meta={"procedure": "ols", "T_eff": view.T_eff})


def _gls(view: RegressionView, R: ConstraintSpec, W: np.ndarray) -> np.ndarray:
    """Constrained GLS coefficients ``alpha`` for weight ``W = Sigma^-1``."""
    K, p = view.K, view.p
    if R.K != K or R.p != p:
        raise InvalidInput("constraint dimensions do not match the data")
    alpha = np.zeros(K * K * p)
    if R.m == 0:
        return alpha
    cols, rows = np.divmod(R.free, K)
    G = view.L @ view.L.T
    N = G[np.ix_(cols, cols)] * W[np.ix_(rows, rows)]
    rhs = (W @ view.Yr @ view.L.T)[rows, cols]
    try:
        factor = cho_factor(N, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientDesign("constrained normal matrix is singular") from exc
    alpha[R.free] = cho_solve(factor, rhs)
    return alpha


def _gls_normal_inverse(view: RegressionView, R: ConstraintSpec, W: np.ndarray) -> np.ndarray:
    cols, rows = np.divmod(R.free, view.K)
    G = view.L @ view.L.T
    N = G[np.ix_(cols, cols)] * W[np.ix_(rows, rows)]
    try:
        factor = cho_factor(N, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientDesign("constrained normal matrix is singular") from exc
    return cho_solve(factor, np.eye(R.m))


def fit_constrained(Y, p: int, R: ConstraintSpec, sigma_inv) -> tuple[np.ndarray, np.ndarray]:
    """GLS estimate under ``alpha = R gamma`` for a given ``Sigma^-1``.

    Returns
    -------
    gamma : ndarray, shape (m,)
        Free coefficients in the order of ``R.free``.
    alpha : ndarray, shape (K^2 p,)
        Full coefficient vector with exact zeros outside the free set.
    """
    view = build_regression(Y, p)
    W = np.asarray(sigma_inv, dtype=float)
    if W.shape != (view.K, view.K):
        raise InvalidInput("sigma_inv has the wrong shape")
    alpha = _gls(view, R, W)
    return alpha[R.free].copy(), alpha


def _alpha_to_A(alpha: np.ndarray, K: int, p: int) -> np.ndarray:
    return _B_to_A(unvec(alpha, K, K * p), p)


def _fit_cov(S: SampleCov, d: int) -> RRCovEstimate:
    return rrcov.fit_isotropic(S) if d == 0 else rrcov.fit_rr(S, d)


def _default_ranks(K: int) -> range:
    return range(1, K) if K > 1 else range(0, 1)


def fit_two_step(Y, p: int, rank_candidates: Iterable[int] | None = None,
                 rank: int | None = None) -> VarModel:
    """Least squares coefficients, then a reduced-rank fit to the residuals.

    The rank is `rank` if given, otherwise the minimum-BIC member of
    `rank_candidates` (default ``1..K-1``).
    """
    view = build_regression(Y, p)
    A = _ols_A(view)
    S = _residual_cov(view, A)
    if rank is not None:
        est, curve = _fit_cov(S, rank), None
    else:
        cands = _default_ranks(view.K) if rank_candidates is None else rank_candidates
        est, curve = rrcov.select_rank(S, cands)
    meta = {
        "procedure": "two_step",
        "T_eff": view.T_eff,
        "rank_bic": curve,
        "residual_cov": S,
    }
    return VarModel(view.mu, A, est, ConstraintSpec.unconstrained(view.K, p), meta)


def _neg2(view: RegressionView, A, est: RRCovEstimate) -> tuple[float, SampleCov]:
    S = _residual_cov(view, A)
    return view.T_eff * rrcov.neg2_loglik_avg(est, S), S


def neg2_loglik(model: VarModel, Y) -> float:
    """Gaussian ``-2 log L`` (without the constant) of the model on `Y`.

    The model's own mean is used, so this evaluates a fixed parameter
    vector rather than refitting anything.
    """
    view = build_regression(_as_data(Y) - model.mu, model.p, demean=False)
    if model.noise_cov is None:
        raise InvalidInput("model has no noise covariance")
    return _neg2(view, model.A, model.noise_cov)[0]


def fit_iterative(Y, p: int, R: ConstraintSpec, d: int, max_iter: int = 200,
                  tol: float = 1e-8) -> VarModel:
    """Alternate constrained GLS and the closed-form rank-`d` covariance fit.

    Starts from GLS with ``Sigma = I`` and the rank-`d` fit of its
    residuals. Each sweep first re-estimates ``alpha`` given the current
    covariance, then the covariance given ``alpha``; both steps are exact
    conditional maximizers, so ``-2 log L`` never increases. Stops when the
    relative change of ``-2 log L`` falls below `tol`.

    The result's ``fit_meta`` holds ``trace`` (``-2 log L`` after
    initialization and after every sweep), ``alpha_change`` (max-abs
    coefficient change per sweep), ``iterations`` and ``converged``.
    """
    view = build_regression(Y, p)
    K = view.K
    if not 0 <= d <= max(K - 1, 0):
        raise InvalidRank(f"rank must lie in [0, {K - 1}], got {d}")
    alpha = _gls(view, R, np.eye(K))
    A = _alpha_to_A(alpha, K, p)
    est = _fit_cov(_residual_cov(view, A), d)
    value, _ = _neg2(view, A, est)
    trace = [value]
    changes: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new_alpha = _gls(view, R, est.inverse())
        A = _alpha_to_A(new_alpha, K, p)
        est = _fit_cov(_residual_cov(view, A), d)
        new_value, _ = _neg2(view, A, est)
        changes.append(float(np.max(np.abs(new_alpha - alpha), initial=0.0)))
        trace.append(new_value)
        alpha = new_alpha
        if abs(value - new_value) <= tol * max(abs(value), 1.0):
            converged = True
            value = new_value
            break
        value = new_value
    if not converged:
        logger.warning("iterative fit did not converge in %d iterations", max_iter)
    meta = {
        "procedure": "iterative",
        "T_eff": view.T_eff,
        "iterations": it,
        "converged": converged,
        "trace": trace,
        "alpha_change": changes,
        "rank": d,
    }
    return VarModel(view.mu, A, est, R, meta)


def _order_bic(view: RegressionView, fitter: str, rank_candidates) -> float:
    K, N = view.K, view.T_eff
    A = _ols_A(view)
    S = _residual_cov(view, A)
    if fitter == "full":
        d = K - 1 if K > 1 else 0
        est = _fit_cov(S, d)
    elif fitter == "rr":
        cands = _default_ranks(K) if rank_candidates is None else rank_candidates
        est, _ = rrcov.select_rank(S, cands)
    else:
        raise InvalidInput(f"unknown fitter {fitter!r}; use 'full' or 'rr'")
    if not est.invertible:
        return math.inf
    n_cov = rrcov.n_params(K, est.requested_rank)
    return N * rrcov.neg2_loglik_avg(est, S) + math.log(N) * (K * K * view.p + n_cov)


def select_order(Y, orders: Iterable[int], fitter: str = "full",
                 rank_candidates: Iterable[int] | None = None) -> tuple[int, dict[int, float]]:
    """Minimum-BIC autoregressive order.

    All orders are scored on the common responses ``t = max(orders)+1..T``.
    ``fitter="full"`` uses the unrestricted residual covariance,
    ``fitter="rr"`` the BIC-selected reduced-rank one.

    Returns
    -------
    p_best : int
    table : dict
        ``{p: BIC(p)}`` in increasing ``p``.
    """
    Y = _as_data(Y)
    orders = sorted(set(int(p) for p in orders))
    if not orders or orders[0] < 0:
        raise InvalidInput("orders must be a non-empty set of non-negative integers")
    start = orders[-1]
    if start >= Y.shape[0] - 1:
        raise InsufficientData("largest order leaves no usable sample")
    table: dict[int, float] = {}
    best, best_bic = orders[0], math.inf
    for p in orders:
        try:
            value = _order_bic(build_regression(Y, p, start=start), fitter, rank_candidates)
        except RankDeficientDesign:
            value = math.inf
        table[p] = value
        if value < best_bic:
            best, best_bic = p, value
    return best, table


def coef_stderr(model: VarModel, view: RegressionView) -> np.ndarray:
    """Asymptotic GLS standard errors, shape (p, K, K).

    Square roots of the diagonal of ``R [R'(L L' kron Sigma^-1) R]^-1 R'``;
    constrained coefficients get 0.
    """
    if model.noise_cov is None:
        raise InvalidInput("model has no noise covariance")
    if view.K != model.K or view.p != model.p:
        raise InvalidInput("view does not match the model")
    R = model.constraint or ConstraintSpec.unconstrained(model.K, model.p)
    se = np.zeros(model.K * model.K * model.p)
    if R.m:
        cov = _gls_normal_inverse(view, R, model.noise_cov.inverse())
        se[R.free] = np.sqrt(np.diag(cov))
    return _alpha_to_A(se, model.K, model.p)
