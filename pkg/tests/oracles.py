"""Independent reference computations used by the tests.

Nothing here calls into the closed-form paths of the package; everything
is dense algebra or generic numerical optimization.
"""
import numpy as np
from scipy.optimize import minimize


def dense_neg2(Sigma, S):
    sign, logdet = np.linalg.slogdet(Sigma)
    if sign <= 0 or not np.isfinite(logdet):
        return np.inf
    return logdet + np.trace(np.linalg.inv(Sigma) @ S)


def _unpack(theta, K, d):
    X = theta[: K * d].reshape(K, d)
    U, _ = np.linalg.qr(X)
    lam = np.exp(theta[K * d: K * d + d])
    s2 = np.exp(theta[-1])
    return U, lam, s2


def rr_numerical_min(S, d, rng, starts=6):
    """Minimize log|Sigma| + tr(Sigma^-1 S) over Sigma = U diag(lam) U' + s2 I.

    U is an orthonormal frame obtained from an unconstrained K x d matrix by
    QR; lam and s2 are log-parameterized. Several random starts.
    """
    K = S.shape[0]

    def f(theta):
        # a large finite value keeps finite-difference gradients defined
        if np.max(np.abs(theta[K * d:])) > 50:
            return 1e10
        U, lam, s2 = _unpack(theta, K, d)
        return min(dense_neg2((U * lam) @ U.T + s2 * np.eye(K), S), 1e10)

    best = np.inf
    scale = np.trace(S) / K
    for _ in range(starts):
        x0 = np.concatenate([rng.standard_normal(K * d),
                             np.log(scale * rng.uniform(0.5, 2.0, d)),
                             [np.log(scale * rng.uniform(0.2, 1.0))]])
        res = minimize(f, x0, method="BFGS", options={"gtol": 1e-9, "maxiter": 5000})
        best = min(best, res.fun)
    return best


def var_is_causal(A):
    """Causality from the roots of det(I - sum_k A_k z^k).

    The determinant is a polynomial of degree at most Kp; its coefficients
    are recovered by evaluating it at Kp + 1 roots of unity and applying an
    inverse DFT, then numpy finds the roots.
    """
    A = np.asarray(A, dtype=float)
    p, K, _ = A.shape
    n = K * p + 1
    z = np.exp(2j * np.pi * np.arange(n) / n)
    vals = np.array([np.linalg.det(np.eye(K) - sum(A[k] * zz ** (k + 1) for k in range(p)))
                     for zz in z])
    # vals[k] = sum_m c_m w^(km), so the forward DFT divided by n returns c_m
    coef = (np.fft.fft(vals) / n).real
    coef = np.trim_zeros(coef, "b")
    if coef.size <= 1:
        return True
    roots = np.roots(coef[::-1])
    return bool(np.all(np.abs(roots) > 1.0))
