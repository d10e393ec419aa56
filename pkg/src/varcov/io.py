"""Dataset, model and table files.

Floats are written with ``repr`` (shortest string that parses back to the
same double), so every numeric value survives a save/load cycle exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidInput
from .rrcov import RRCovEstimate
from .var import ConstraintSpec, VarModel

__all__ = [
    "FORMAT_VERSION",
    "read_dataset",
    "write_dataset",
    "read_table",
    "write_table",
    "read_constraints",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

FORMAT_VERSION = 1


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _parse_float(cell: str) -> float:
    return float(cell.strip())


def read_dataset(path) -> tuple[np.ndarray, list[str]]:
    """Read a comma-separated T x K table; the header row is optional.

    Returns the data and the series names (``y1, y2, ...`` when absent).
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise InvalidInput(f"{path}: empty file")
    names = None
    try:
        [_parse_float(c) for c in rows[0]]
    except ValueError:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(rows[0]) if rows else len(names or [])
    data = []
    for n, row in enumerate(rows, start=2 if names else 1):
        if len(row) != width:
            raise InvalidInput(f"{path}:{n}: expected {width} fields, got {len(row)}")
        try:
            values = [_parse_float(c) for c in row]
        except ValueError as exc:
            raise InvalidInput(f"{path}:{n}: {exc}") from exc
        if not all(math.isfinite(v) for v in values):
            raise InvalidInput(f"{path}:{n}: non-finite value")
        data.append(values)
    if len(data) < 2:
        raise InvalidInput(f"{path}: need at least 2 rows of data")
    if names is not None and len(names) != width:
        raise InvalidInput(f"{path}: header has {len(names)} names for {width} columns")
    return np.array(data, dtype=float), names or [f"y{i + 1}" for i in range(width)]


def write_dataset(path, Y, names=None) -> None:
    Y = np.asarray(Y, dtype=float)
    names = names or [f"y{i + 1}" for i in range(Y.shape[1])]
    write_table(path, names, Y.tolist())


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInput(f"{path}: empty table")
    return rows[0], rows[1:]


def read_constraints(path) -> list[tuple[int, int, int]]:
    """Free coefficients as 1-indexed ``lag,row,col`` lines; ``#`` starts a comment."""
    triples = []
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [s.strip() for s in line.split(",")]
        if len(parts) != 3:
            raise InvalidInput(f"{path}:{n}: expected 'lag,row,col'")
        try:
            triples.append(tuple(int(s) for s in parts))
        except ValueError as exc:
            raise InvalidInput(f"{path}:{n}: {exc}") from exc
    return triples


def _json_safe(x):
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.ndarray):
        return _json_safe(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if x is None or isinstance(x, str):
        return x
    return None


_META_KEYS = ("procedure", "T_eff", "iterations", "converged", "trace", "alpha_change",
              "rank", "rank_bic", "order_bic", "order")


def model_to_dict(model: VarModel, series=None) -> dict:
    est = model.noise_cov
    out = {
        "format_version": FORMAT_VERSION,
        "K": model.K,
        "p": model.p,
        "series": list(series) if series is not None else None,
        "mu": model.mu.tolist(),
        "A": model.A.tolist(),
        "noise_cov": None,
        "constraint": None,
        "fit_meta": _json_safe({k: model.fit_meta[k] for k in _META_KEYS if k in model.fit_meta}),
    }
    if est is not None:
        out["noise_cov"] = {
            "requested_rank": est.requested_rank,
            "d": est.d,
            "U": est.U.tolist(),
            "lam": est.lam.tolist(),
            "sigma2": float(est.sigma2),
            "n_samples": est.n_samples,
            "tie": est.tie,
        }
    if model.constraint is not None and not model.constraint.is_full:
        out["constraint"] = {"free": model.constraint.free.tolist()}
    return out


def model_from_dict(data: dict) -> tuple[VarModel, list[str] | None]:
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise InvalidInput(f"unsupported model format_version {version!r}")
    try:
        K, p = int(data["K"]), int(data["p"])
        mu = np.array(data["mu"], dtype=float)
        A = np.array(data["A"], dtype=float).reshape(p, K, K)
        est = None
        nc = data.get("noise_cov")
        if nc is not None:
            d = int(nc["d"])
            est = RRCovEstimate(
                U=np.array(nc["U"], dtype=float).reshape(K, d),
                lam=np.array(nc["lam"], dtype=float).reshape(d),
                sigma2=float(nc["sigma2"]),
                n_samples=int(nc["n_samples"]),
                requested_rank=int(nc["requested_rank"]),
                tie=bool(nc.get("tie", False)),
            )
        con = data.get("constraint")
        constraint = (ConstraintSpec(K, p, np.array(con["free"], dtype=np.int64))
                      if con is not None else ConstraintSpec.unconstrained(K, p))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"malformed model file: {exc}") from exc
    model = VarModel(mu, A, est, constraint, dict(data.get("fit_meta") or {}))
    return model, data.get("series")


def save_model(path, model: VarModel, series=None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, series), indent=1) + "\n")


def load_model(path) -> tuple[VarModel, list[str] | None]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: not valid JSON: {exc}") from exc
    return model_from_dict(data)
