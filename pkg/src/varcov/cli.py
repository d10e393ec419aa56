"""Command-line interface.

Exit codes: 0 success, 2 bad input or usage, 3 numerical failure,
4 iterative fit did not converge (the model file is still written).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import forecast as fc
from . import io
from . import rrcov
from . import var
from .errors import (
    InsufficientData,
    InvalidCase,
    InvalidInput,
    InvalidOrder,
    InvalidRank,
    NonCausalModel,
    NotPositiveDefinite,
    NumericalFailure,
    RankDeficientDesign,
    SingularEstimate,
    VarCovError,
)
from .simharness import ESTIMATORS, make_case, run_replications

logger = logging.getLogger("varcov")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_NOT_CONVERGED = 4

_NUMERIC_ERRORS = (NumericalFailure, SingularEstimate, RankDeficientDesign, NonCausalModel,
                   NotPositiveDefinite)
_INPUT_ERRORS = (InvalidInput, InsufficientData, InvalidRank, InvalidOrder, InvalidCase)


class UsageError(Exception):
    pass


def _int_range(text: str) -> list[int]:
    """Parse ``"0..3"``, ``"1,2,5"`` or ``"4"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a..b' or a comma list, got {text!r}")


def _out_dir(args, fallback: Path) -> Path:
    out = Path(args.out_dir) if getattr(args, "out_dir", None) else fallback
    out.mkdir(parents=True, exist_ok=True)
    return out


def _curve_rows(curve: dict) -> list[tuple]:
    return [(k, v) for k, v in sorted(curve.items())]


# ---------------------------------------------------------------- fit

def _iterative_bic(model: var.VarModel) -> float:
    est = model.noise_cov
    N = model.fit_meta["T_eff"]
    return model.fit_meta["trace"][-1] + math.log(N) * (
        model.constraint.m + rrcov.n_params(model.K, est.requested_rank))


def cmd_fit(args) -> int:
    Y, names = io.read_dataset(args.data)
    T, K = Y.shape
    out = Path(args.out)
    report_dir = _out_dir(args, out.parent if str(out.parent) else Path("."))
    report: dict[str, object] = {}

    triples = io.read_constraints(args.constraints) if args.constraints else None
    if triples is not None and args.order_select:
        raise UsageError("--constraints fixes the lags; use --order, not --order-select")

    if args.order_select:
        p, order_curve = var.select_order(Y, args.order_select, fitter=args.order_fitter)
        io.write_table(report_dir / "order_bic.csv", ["p", "bic"], _curve_rows(order_curve))
        report["order_bic"] = order_curve
    elif args.order is not None:
        p = args.order
    elif triples:
        p = max(t[0] for t in triples)
    else:
        p = 1

    if args.rank is not None and not 0 <= args.rank <= max(K - 1, 0):
        raise InvalidRank(f"--rank must lie in [0, {K - 1}]")

    exit_code = EXIT_OK
    if triples is None:
        model = var.fit_two_step(Y, p, rank=args.rank)
        curve = model.fit_meta.get("rank_bic")
    else:
        R = var.ConstraintSpec.from_triples(triples, K, p)
        ranks = [args.rank] if args.rank is not None else list(var._default_ranks(K))
        fits = {d: var.fit_iterative(Y, p, R, d, max_iter=args.max_iter, tol=args.tol)
                for d in ranks}
        curve = {d: _iterative_bic(m) for d, m in fits.items()}
        best = min(curve, key=lambda d: (curve[d], d))
        model = fits[best]
        io.write_table(report_dir / "trace.csv", ["iteration", "neg2loglik"],
                       list(enumerate(model.fit_meta["trace"])))
        if not model.fit_meta["converged"]:
            exit_code = EXIT_NOT_CONVERGED
    if curve is not None:
        io.write_table(report_dir / "rank_bic.csv", ["d", "bic"], _curve_rows(curve))
        model.fit_meta["rank_bic"] = curve
    if args.order_select:
        model.fit_meta["order_bic"] = report["order_bic"]
    model.fit_meta["order"] = p

    view = var.build_regression(Y - model.mu, p, demean=False)
    E = var.residuals(view, model.A)
    rows = []
    for i, name in enumerate(names):
        e = E[i]
        lag1 = float(np.dot(e[1:] - e.mean(), e[:-1] - e.mean()) / np.sum((e - e.mean()) ** 2)) \
            if e.size > 1 and np.any(e != e.mean()) else 0.0
        rows.append((name, float(e.mean()), float(e.std()), lag1))
    io.write_table(report_dir / "residual_summary.csv", ["series", "mean", "std", "acf1"], rows)

    io.save_model(out, model, names)
    est = model.noise_cov
    print(f"model: {out}")
    print(f"order p = {p}")
    print(f"procedure = {model.fit_meta['procedure']}")
    print(f"selected d = {est.requested_rank} (effective {est.d})")
    if curve is not None:
        print("d,bic")
        for d, b in _curve_rows(curve):
            print(f"{d},{float(b)!r}")
    if model.fit_meta["procedure"] == "iterative":
        print(f"iterations = {model.fit_meta['iterations']}, "
              f"converged = {model.fit_meta['converged']}")
    return exit_code


# ---------------------------------------------------------------- forecast

def _load_pair(args):
    model, series = io.load_model(args.model)
    Y, names = io.read_dataset(args.data)
    if Y.shape[1] != model.K:
        raise InvalidInput(f"data has {Y.shape[1]} series, model has K={model.K}")
    if Y.shape[0] <= model.p:
        raise InsufficientData(f"need more than p={model.p} rows")
    if model.noise_cov is None:
        raise InvalidInput("model file has no noise covariance")
    return model, Y, series or names


def cmd_forecast(args) -> int:
    model, Y, names = _load_pair(args)
    out_dir = _out_dir(args, Path(args.model).resolve().parent)
    yhat = fc.forecast1(model, Y)
    f = fc.fmse1(model, Y)
    io.write_table(out_dir / "fmse.csv", ["series", *names],
                   [(n, *row) for n, row in zip(names, f.matrix.tolist())])
    sig = np.diag(model.noise_cov.full_matrix())
    io.write_table(out_dir / "fmse_diag.csv", ["series", "forecast", "fmse", "sigma_z"],
                   [(n, yhat[i], f.matrix[i, i], sig[i]) for i, n in enumerate(names)])
    print("series,forecast")
    for n, v in zip(names, yhat):
        print(f"{n},{float(v)!r}")
    return EXIT_OK


# ---------------------------------------------------------------- diagnose

def cmd_diagnose(args) -> int:
    model, Y, names = _load_pair(args)
    est = model.noise_cov
    if est.d == 0:
        raise InvalidRank("model has rank 0; there are no latent dimensions to diagnose")
    out_dir = _out_dir(args, Path(args.model).resolve().parent)
    view = var.build_regression(Y - model.mu, model.p, demean=False)
    E = var.residuals(view, model.A).T
    scores = rrcov.latent_scores(est, E)
    n = scores.shape[0]
    if not 0 <= args.max_lag < n:
        raise InvalidInput(f"--max-lag must lie in [0, {n - 1}]")
    band = 1.96 / math.sqrt(n)
    table = rrcov.correlation_table(scores, args.max_lag)
    io.write_table(out_dir / "latent_ccf.csv", ["dim_i", "dim_j", "lag", "corr", "band"],
                   [(i + 1, j + 1, h, r, band) for i, j, h, r in table])
    io.write_table(out_dir / "latent_positions.csv",
                   ["series", *[f"u{k + 1}" for k in range(est.d)]],
                   [(nm, *row) for nm, row in zip(names, est.U.tolist())])
    io.write_table(out_dir / "latent_scores.csv", [f"delta{k + 1}" for k in range(est.d)],
                   scores.tolist())
    io.write_table(out_dir / "residuals.csv", list(names), E.tolist())
    inside = [abs(r) <= band for i, j, h, r in table if h != 0]
    frac = sum(inside) / len(inside) if inside else 1.0
    print(f"latent dimensions = {est.d}, T = {n}, band = {band!r}")
    print(f"nonzero-lag correlations inside band: {frac:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    if (args.case is None) == (args.model is None):
        raise UsageError("give exactly one of --case or --model")
    if args.T < 1:
        raise InvalidInput("--T must be positive")
    if args.case is not None:
        case = make_case(args.case, args.K)
        rng = np.random.default_rng(args.seed)
        Y = rng.standard_normal((args.T, case.K)) @ np.linalg.cholesky(case.Sigma).T
        names = None
    else:
        model, names = io.load_model(args.model)
        Y = var.simulate(model, args.T, burn_in=args.burn_in, seed=args.seed)
    io.write_dataset(args.out, Y, names)
    print(f"wrote {Y.shape[0]} x {Y.shape[1]} to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- bench

_METRIC_LABELS = {"stein": "SL", "mse": "MSE_spectral", "mse_frobenius": "MSE_frobenius"}


def cmd_bench(args) -> int:
    case = make_case(args.case, args.K)
    out_dir = _out_dir(args, Path("."))
    estimators = tuple(s.strip() for s in args.estimators.split(",") if s.strip())
    bad = set(estimators) - set(ESTIMATORS)
    if bad:
        raise UsageError(f"unknown estimators {sorted(bad)}")
    ranks = args.ranks if args.ranks is not None else list(range(0, case.K))
    t2_rows, t3_rows = [], []
    n_total = n_failed = 0
    for T in args.T:
        _, agg = run_replications(case, T, args.reps, estimators, seed=args.seed,
                                  center=args.center, rank_candidates=ranks,
                                  ss_variant=args.ss_variant, workers=args.workers)
        n_total += agg.reps
        n_failed += agg.n_failed
        if "rr" in estimators:
            t2_rows.append((T, *[agg.rank_counts.get(d, 0) for d in ranks], agg.n_failed))
        for name, metrics in agg.reduction.items():
            if name == "sample":
                continue
            for metric, (mean, se) in metrics.items():
                t3_rows.append((case.kind, T, name, _METRIC_LABELS[metric], mean, se,
                                agg.reps - agg.n_failed))
        print(f"case {case.kind} T={T}: {agg.reps - agg.n_failed}/{agg.reps} replications ok")
    if "rr" in estimators:
        io.write_table(out_dir / "table2.csv", ["T", *[f"d_{d}" for d in ranks], "failed"], t2_rows)
    io.write_table(out_dir / "table3.csv",
                   ["case", "T", "estimator", "metric", "mean_reduction", "stderr", "n_ok"],
                   t3_rows)
    if n_total and n_failed == n_total:
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varcov", description=(
        "Reduced-rank noise covariance for vector autoregressions."))
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a VAR with reduced-rank noise covariance")
    p.add_argument("data", help="CSV with time in rows, series in columns")
    p.add_argument("--out", default="model.json")
    p.add_argument("--out-dir", help="directory for report CSVs (default: next to --out)")
    order = p.add_mutually_exclusive_group()
    order.add_argument("--order", type=int)
    order.add_argument("--order-select", type=_int_range, metavar="LO..HI")
    p.add_argument("--order-fitter", choices=("full", "rr"), default="full")
    p.add_argument("--constraints", help="file of free coefficients, one 'lag,row,col' per line")
    rank = p.add_mutually_exclusive_group()
    rank.add_argument("--rank", type=int)
    rank.add_argument("--rank-select", action="store_true",
                      help="choose d by BIC over 1..K-1 (the default)")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="one-step forecast and approximate forecast MSE")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("diagnose", help="latent-score correlation diagnostics")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--max-lag", type=int, default=20)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--case", choices=("I", "II", "III"))
    p.add_argument("--K", type=int, default=15)
    p.add_argument("--model")
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="Monte Carlo comparison of covariance estimators")
    p.add_argument("--case", choices=("I", "II", "III"), required=True)
    p.add_argument("--K", type=int, default=15)
    p.add_argument("--T", type=_int_range, default=[50, 100, 200, 400])
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--estimators", default="sample,rr,lw,ss")
    p.add_argument("--ranks", type=_int_range, help="candidate ranks (default 0..K-1)")
    p.add_argument("--ss-variant", choices=("diag", "corpcor"), default="corpcor")
    p.add_argument("--center", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except _NUMERIC_ERRORS as exc:
        print(f"varcov: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (*_INPUT_ERRORS, OSError) as exc:
        print(f"varcov: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VarCovError as exc:
        print(f"varcov: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
