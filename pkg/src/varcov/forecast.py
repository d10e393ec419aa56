"""Companion form, stationary covariance and one-step forecast MSE."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InsufficientData, InvalidInput, InvalidOrder, NonCausalModel, NumericalFailure
from .linalg import kron, symmetrize, unvec, vec
from .var import CAUSAL_MARGIN, VarModel, build_regression, fit_two_step

__all__ = [
    "CompanionForm",
    "ForecastMse",
    "companion_matrix",
    "spectral_radius",
    "companion",
    "stationary_cov",
    "omega1",
    "fmse1",
    "forecast1",
    "compare_rr_full",
]

# Above this state dimension the K^2 p^2 linear system is not formed.
VEC_SOLVE_MAX_DIM = 40


@dataclass(frozen=True)
class CompanionForm:
    Psi: np.ndarray
    SigmaV: np.ndarray


@dataclass(frozen=True)
class ForecastMse:
    """Approximate one-step forecast MSE ``matrix = Sigma_Z + omega``."""

    matrix: np.ndarray
    omega: np.ndarray
    gamma_y: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()


def companion_matrix(A) -> np.ndarray:
    """Kp x Kp matrix with ``[A_1 ... A_p]`` on top and identities below."""
    A = np.asarray(A, dtype=float)
    p, K, _ = A.shape
    if p == 0:
        raise InvalidOrder("a VAR(0) has no companion matrix")
    Psi = np.zeros((K * p, K * p))
    Psi[:K] = np.concatenate(list(A), axis=1)
    Psi[K:, :-K] = np.eye(K * (p - 1))
    return Psi


def spectral_radius(model: VarModel) -> float:
    if model.p == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(companion_matrix(model.A)))))


def companion(model: VarModel) -> CompanionForm:
    if model.noise_cov is None:
        raise InvalidInput("model has no noise covariance")
    Psi = companion_matrix(model.A)
    K = model.K
    SigmaV = np.zeros_like(Psi)
    SigmaV[:K, :K] = model.noise_cov.full_matrix()
    return CompanionForm(Psi, SigmaV)


def _lyap_vec(Psi: np.ndarray, Q: np.ndarray) -> np.ndarray:
    n = Psi.shape[0]
    M = np.eye(n * n) - kron(Psi, Psi)
    try:
        g = np.linalg.solve(M, vec(Q))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("Lyapunov system is singular") from exc
    return symmetrize(unvec(g, n, n))


def _lyap_fixed_point(Psi: np.ndarray, Q: np.ndarray, rtol: float = 1e-16,
                      max_doublings: int = 200) -> np.ndarray:
    # Iterates of G <- Psi G Psi' + Q, skipping ahead by doubling:
    # after step k, G holds the 2^k-th iterate and P = Psi^(2^k).
    G = symmetrize(Q)
    P = Psi.copy()
    for _ in range(max_doublings):
        inc = P @ G @ P.T
        G = G + 0.5 * (inc + inc.T)
        if np.linalg.norm(inc) <= rtol * np.linalg.norm(G):
            return G
        P = P @ P
    raise NumericalFailure("fixed-point Lyapunov iteration did not converge")


def stationary_cov(cf: CompanionForm, method: str = "auto") -> np.ndarray:
    """Solve ``Gamma = Psi Gamma Psi' + Sigma_V``.

    Parameters
    ----------
    cf : CompanionForm
    method : {"auto", "vec", "fixed_point"}
        ``"vec"`` solves the vectorized system with ``I - Psi kron Psi``;
        ``"fixed_point"`` iterates the recursion. ``"auto"`` uses the
        vectorized solve up to ``Kp = 40``.
    """
    Psi = cf.Psi
    if Psi.size and np.max(np.abs(np.linalg.eigvals(Psi))) >= 1.0 - CAUSAL_MARGIN:
        raise NonCausalModel("companion matrix has spectral radius >= 1")
    if method == "auto":
        method = "vec" if Psi.shape[0] <= VEC_SOLVE_MAX_DIM else "fixed_point"
    if method == "vec":
        return _lyap_vec(Psi, cf.SigmaV)
    if method == "fixed_point":
        return _lyap_fixed_point(Psi, cf.SigmaV)
    raise InvalidInput(f"unknown method {method!r}")


def _quad_forms(gamma: np.ndarray, L: np.ndarray) -> np.ndarray:
    try:
        factor = cho_factor(gamma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("stationary covariance is singular") from exc
    return np.sum(L * cho_solve(factor, L), axis=0)


def _omega(model: VarModel, Y) -> tuple[np.ndarray, np.ndarray]:
    K, p = model.K, model.p
    if model.noise_cov is None:
        raise InvalidInput("model has no noise covariance")
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[1] != K:
        raise InvalidInput(f"data has {Y.shape[1]} series, model has {K}")
    if p == 0:
        return np.zeros((K, K)), np.zeros((0, 0))
    gamma = stationary_cov(companion(model))
    view = build_regression(Y - model.mu, p, demean=False)
    q = _quad_forms(gamma, view.L)
    # mean(q) estimates E[L' Gamma^-1 L] = Kp; the 1/T factor makes Omega
    # the O(1/T) estimation-uncertainty term.
    scale = float(np.mean(q)) / view.T_eff
    return scale * model.noise_cov.full_matrix(), gamma


def omega1(model: VarModel, Y) -> np.ndarray:
    """Estimation-uncertainty part of the one-step forecast MSE.

    ``Omega = (1/N) mean_t(L_t' Gamma^-1 L_t) Sigma_Z`` over the N lag
    vectors ``L_t`` (t = p..T-1) of the demeaned data, with ``Gamma`` the
    stationary covariance implied by the model. Zero for p == 0.
    """
    return _omega(model, Y)[0]


def fmse1(model: VarModel, Y) -> ForecastMse:
    omega, gamma = _omega(model, Y)
    return ForecastMse(model.noise_cov.full_matrix() + omega, omega, gamma)


def forecast1(model: VarModel, recent) -> np.ndarray:
    """One-step forecast from the last `p` rows of `recent` (oldest first)."""
    recent = np.asarray(recent, dtype=float)
    if recent.ndim == 1:
        recent = recent[:, None] if model.K == 1 else recent[None, :]
    if recent.shape[1] != model.K:
        raise InvalidInput(f"history has {recent.shape[1]} series, model has {model.K}")
    if recent.shape[0] < model.p:
        raise InsufficientData(f"need {model.p} past values, got {recent.shape[0]}")
    out = model.mu.copy()
    for k in range(model.p):
        out += model.A[k] @ (recent[-1 - k] - model.mu)
    return out


def compare_rr_full(Y, p: int, rank_candidates=None) -> dict:
    """Approximate forecast MSE under the BIC-selected reduced-rank
    covariance and under the unrestricted one, with identical coefficients.
    """
    Y = np.asarray(Y, dtype=float)
    K = Y.shape[1]
    rr = fit_two_step(Y, p, rank_candidates)
    full = fit_two_step(Y, p, rank=K - 1 if K > 1 else 0)
    f_rr, f_full = fmse1(rr, Y), fmse1(full, Y)
    return {
        "rank": rr.noise_cov.requested_rank,
        "fmse_rr": f_rr.diagonal,
        "fmse_full": f_full.diagonal,
        "trace_omega_rr": float(np.trace(f_rr.omega)),
        "trace_omega_full": float(np.trace(f_full.omega)),
    }
