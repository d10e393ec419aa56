"""Covariance loss functions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidInput, NotPositiveDefinite
from .linalg import chol, symmetrize

__all__ = ["LossReport", "steins_loss", "mse_loss", "pct_reduction", "loss_report"]

NORMS = ("spectral", "frobenius")


@dataclass(frozen=True)
class LossReport:
    estimator_tag: str
    stein: float
    mse: float
    mse_frobenius: float


def _whitened_spectrum(est, truth) -> np.ndarray:
    est = symmetrize(est)
    truth = symmetrize(truth)
    if est.shape != truth.shape:
        raise InvalidInput(f"shape mismatch {est.shape} vs {truth.shape}")
    L = chol(truth)
    # L^-1 est L^-T shares its spectrum with est truth^-1
    half = solve_triangular(L, est, lower=True)
    whitened = solve_triangular(L, half.T, lower=True)
    return np.linalg.eigvalsh(symmetrize(whitened))


def steins_loss(est, truth) -> float:
    """``tr(est truth^-1) - log det(est truth^-1) - K``."""
    e = _whitened_spectrum(est, truth)
    if e[0] <= 0:
        raise NotPositiveDefinite("estimate is not positive definite")
    return float(np.sum(e - np.log(e) - 1.0))


def mse_loss(est, truth, norm: str = "spectral") -> float:
    """Squared norm of ``est - truth``.

    ``norm="spectral"`` gives the squared largest singular value,
    ``norm="frobenius"`` the sum of squared entries.
    """
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise InvalidInput(f"shape mismatch {est.shape} vs {truth.shape}")
    diff = est - truth
    if norm == "spectral":
        return float(np.linalg.norm(diff, 2) ** 2)
    if norm == "frobenius":
        return float(np.sum(diff * diff))
    raise InvalidInput(f"unknown norm {norm!r}; choose from {NORMS}")


def pct_reduction(loss_est: float, loss_sample: float) -> float:
    """Percentage reduction ``100 (1 - loss_est / loss_sample)``."""
    if not loss_sample > 0:
        raise InvalidInput("baseline loss must be positive")
    return 100.0 * (1.0 - loss_est / loss_sample)


def loss_report(tag: str, est, truth) -> LossReport:
    return LossReport(
        estimator_tag=tag,
        stein=steins_loss(est, truth),
        mse=mse_loss(est, truth, "spectral"),
        mse_frobenius=mse_loss(est, truth, "frobenius"),
    )
