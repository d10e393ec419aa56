"""Dense linear-algebra primitives.

Symmetric matrices are plain ``numpy.ndarray`` objects. Functions that
expect a symmetric argument read only its lower triangle, so a matrix that
is symmetric up to rounding is treated as exactly symmetric.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InvalidInput, NotPositiveDefinite, NumericalFailure

__all__ = [
    "EigenSystem",
    "symmetrize",
    "eigh",
    "kron",
    "vec",
    "unvec",
    "chol",
    "condition_number",
]


class EigenSystem(NamedTuple):
    """Eigenvalues in descending order with matching unit eigenvectors.

    ``vectors[:, i]`` pairs with ``values[i]``. Each column is oriented so
    that its entry of largest magnitude is non-negative (first such entry
    on ties).
    """

    values: np.ndarray
    vectors: np.ndarray


def symmetrize(m) -> np.ndarray:
    """Return the symmetric matrix defined by the lower triangle of `m`."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise InvalidInput(f"expected a non-empty square matrix, got shape {m.shape}")
    low = np.tril(m)
    return low + np.tril(m, -1).T


def _orient_columns(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigh(m) -> EigenSystem:
    """Symmetric eigendecomposition with deterministic ordering and signs.

    Parameters
    ----------
    m : array_like, shape (K, K)
        Symmetric matrix; only the lower triangle is referenced.

    Returns
    -------
    EigenSystem
        Values sorted descending, orthonormal vectors in matching columns.
    """
    m = symmetrize(m)
    if not np.all(np.isfinite(m)):
        raise InvalidInput("matrix has non-finite entries")
    try:
        values, vectors = np.linalg.eigh(m, UPLO="L")
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition did not converge: {exc}") from exc
    # LAPACK returns ascending order; a stable reversal keeps ties in place.
    order = np.argsort(-values, kind="stable")
    return EigenSystem(values[order], _orient_columns(vectors[:, order]))


def kron(a, b) -> np.ndarray:
    """Kronecker product of two matrices (vectors are treated as columns)."""
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def vec(m) -> np.ndarray:
    """Stack the columns of `m` into one vector."""
    m = np.asarray(m)
    if m.ndim == 1:
        return m.copy()
    return m.reshape(-1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if v.size != rows * cols:
        raise InvalidInput(f"cannot reshape length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def chol(m) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == m``."""
    m = symmetrize(m)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc


def condition_number(m) -> float:
    """Ratio of largest to smallest eigenvalue; ``inf`` if the smallest is <= 0."""
    values = eigh(m).values
    if values[-1] <= 0:
        return float("inf")
    return float(values[0] / values[-1])
