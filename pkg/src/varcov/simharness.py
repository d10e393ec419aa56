"""Seeded Monte Carlo comparison of covariance estimators.

Each replication draws T iid ``N(0, Sigma)`` rows, fits every requested
estimator, and scores it against the truth. Replication ``r`` of a run with
master seed ``s`` draws from ``numpy.random.default_rng([s, r])``, so its
data do not depend on which estimators are run or on how replications are
distributed across workers.
"""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidCase, InvalidInput, VarCovError
from .linalg import chol, eigh
from .metrics import LossReport, loss_report
from .rrcov import sample_cov, select_rank
from .shrinkage import fit_lw, fit_ss

logger = logging.getLogger(__name__)

__all__ = [
    "CaseSpec",
    "ReplicationReport",
    "Aggregate",
    "make_case",
    "run_replications",
    "ESTIMATORS",
    "METRICS",
]

ESTIMATORS = ("sample", "rr", "lw", "ss")
METRICS = ("stein", "mse", "mse_frobenius")


@dataclass(frozen=True)
class CaseSpec:
    kind: str
    K: int
    Sigma: np.ndarray


def make_case(kind: str, K: int = 15, Sigma=None) -> CaseSpec:
    """Population covariance for one of the benchmark designs.

    * ``"I"``: identity.
    * ``"II"``: all covariances 0.16, variances (1.0, 1.0, 0.5, ..., 0.5).
      This is a rank-3 perturbation of ``0.34 I``.
    * ``"III"``: covariance ``(-1)^(i+j) 0.10``, variances
      ``0.47, 0.49, ...`` in steps of 0.02 (0.75 at K = 15).
    * ``"custom"``: the supplied `Sigma`.
    """
    kind = str(kind).upper() if str(kind).lower() != "custom" else "custom"
    if kind == "I":
        if K < 2:
            raise InvalidCase("case I needs K >= 2")
        S = np.eye(K)
    elif kind == "II":
        if K < 3:
            raise InvalidCase("case II needs K >= 3")
        S = np.full((K, K), 0.16)
        np.fill_diagonal(S, [1.0, 1.0] + [0.5] * (K - 2))
    elif kind == "III":
        if K < 2:
            raise InvalidCase("case III needs K >= 2")
        idx = np.arange(K)
        S = 0.10 * (-1.0) ** np.add.outer(idx, idx)
        np.fill_diagonal(S, 0.47 + 0.02 * idx)
    elif kind == "custom":
        if Sigma is None:
            raise InvalidCase("custom case needs Sigma")
        S = np.asarray(Sigma, dtype=float)
        if S.shape != (K, K):
            raise InvalidCase(f"Sigma must be {K} x {K}")
        if not np.allclose(S, S.T):
            raise InvalidCase("Sigma must be symmetric")
    else:
        raise InvalidCase(f"unknown case {kind!r}")
    if eigh(S).values[-1] <= 0:
        raise InvalidCase(f"case {kind} is not positive definite at K={K}")
    S.setflags(write=False)
    return CaseSpec(kind, K, S)


@dataclass(frozen=True)
class ReplicationReport:
    seed: tuple[int, int]
    losses: dict[str, LossReport] = field(default_factory=dict)
    rank: int | None = None
    seconds: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class Aggregate:
    """Summary of a run.

    ``reduction[est][metric]`` is ``(mean, standard error)`` of the
    per-replication percentage reduction relative to the sample covariance;
    ``rank_counts[d]`` counts replications whose selected rank was ``d``.
    """

    case: str
    T: int
    reps: int
    n_failed: int
    reduction: dict[str, dict[str, tuple[float, float]]]
    rank_counts: dict[int, int]


def _one_replication(case: CaseSpec, T: int, estimators: tuple[str, ...], seed: int, r: int,
                     center: bool, rank_candidates: tuple[int, ...], ss_variant: str
                     ) -> ReplicationReport:
    t0 = time.perf_counter()
    rng = np.random.default_rng([seed, r])
    Z = rng.standard_normal((T, case.K)) @ chol(case.Sigma).T
    try:
        S = sample_cov(Z, center=center)
        fits = {"sample": S.S}
        rank = None
        if "rr" in estimators:
            est, _ = select_rank(S, rank_candidates)
            fits["rr"] = est.full_matrix()
            rank = est.requested_rank
        if "lw" in estimators:
            fits["lw"] = fit_lw(S, Z).matrix
        if "ss" in estimators:
            fits["ss"] = fit_ss(S, Z, variant=ss_variant).matrix
        losses = {name: loss_report(name, fits[name], case.Sigma)
                  for name in estimators}
    except VarCovError as exc:
        return ReplicationReport((seed, r), seconds=time.perf_counter() - t0,
                                 error=f"{type(exc).__name__}: {exc}")
    return ReplicationReport((seed, r), losses, rank, time.perf_counter() - t0)


def _chunk(args):
    case, T, estimators, seed, rs, center, ranks, ss_variant = args
    return [_one_replication(case, T, estimators, seed, r, center, ranks, ss_variant) for r in rs]


def _worker_cap(workers: int | None) -> int:
    cap = os.environ.get("VARCOV_THREADS")
    n = workers if workers is not None else 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            logger.warning("ignoring non-integer VARCOV_THREADS=%r", cap)
    return max(1, n)


def aggregate(case: CaseSpec, T: int, reports: list[ReplicationReport],
              estimators: tuple[str, ...]) -> Aggregate:
    ok = [rep for rep in reports if rep.ok]
    reduction: dict[str, dict[str, tuple[float, float]]] = {}
    for name in estimators:
        reduction[name] = {}
        for metric in METRICS:
            vals = []
            for rep in ok:
                base = getattr(rep.losses["sample"], metric)
                if base > 0:
                    vals.append(100.0 * (1.0 - getattr(rep.losses[name], metric) / base))
            if vals:
                arr = np.array(vals)
                se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
                reduction[name][metric] = (float(arr.mean()), se)
            else:
                reduction[name][metric] = (math.nan, math.nan)
    counts: dict[int, int] = {}
    for rep in ok:
        if rep.rank is not None:
            counts[rep.rank] = counts.get(rep.rank, 0) + 1
    return Aggregate(case.kind, T, len(reports), len(reports) - len(ok), reduction,
                     dict(sorted(counts.items())))


def run_replications(case: CaseSpec, T: int, reps: int = 500,
                     estimators=ESTIMATORS, seed: int = 0, center: bool = False,
                     rank_candidates=None, ss_variant: str = "corpcor",
                     workers: int | None = None) -> tuple[list[ReplicationReport], Aggregate]:
    """Run `reps` seeded replications and aggregate them.

    Parameters
    ----------
    case : CaseSpec
    T : int
        Observations per replication.
    reps : int
    estimators : iterable of str
        Subset of ``("sample", "rr", "lw", "ss")``; ``"sample"`` is always
        included because it is the baseline.
    seed : int
        Master seed.
    center : bool
        Demean each sample before estimating (the population mean is zero).
    rank_candidates : iterable of int, optional
        Ranks offered to BIC; default ``0..K-1`` so that the isotropic
        model competes.
    ss_variant : str
        Passed to :func:`fit_ss`.
    workers : int, optional
        Process count; capped by the ``VARCOV_THREADS`` environment variable.

    Returns
    -------
    reports : list of ReplicationReport
        Ordered by replication index.
    summary : Aggregate
    """
    if reps < 1:
        raise InvalidInput("reps must be at least 1")
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise InvalidInput(f"unknown estimators {sorted(unknown)}")
    ests = tuple(name for name in ESTIMATORS if name in set(estimators) | {"sample"})
    ranks = tuple(range(0, case.K)) if rank_candidates is None else tuple(rank_candidates)
    n_workers = _worker_cap(workers)
    if n_workers == 1:
        reports = _chunk((case, T, ests, seed, range(reps), center, ranks, ss_variant))
    else:
        bounds = np.linspace(0, reps, n_workers + 1).astype(int)
        jobs = [(case, T, ests, seed, range(a, b), center, ranks, ss_variant)
                for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            reports = [rep for chunk in pool.map(_chunk, jobs) for rep in chunk]
    for rep in reports:
        if not rep.ok:
            logger.warning("replication %d failed: %s", rep.seed[1], rep.error)
    return reports, aggregate(case, T, reports, ests)
