"""Pool CSV and design JSON reading and writing."""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .core import InputError
from .criteria import Criterion
from .relaxation import FractionalDesign
from .rounding import IntegralDesign


def _floats(row):
    return [float(v) for v in row]


def read_pool(path) -> np.ndarray:
    """Read an n x p pool; a single non-numeric first line is taken as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(v.strip() for v in r)]
    if not rows:
        raise InputError(f"{path}: empty pool file")
    try:
        _floats(rows[0])
    except ValueError:
        rows = rows[1:]
    try:
        X = np.array([_floats(r) for r in rows], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from None
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise InputError(f"{path}: rows must all have the same number of columns")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{path}: non-finite entries")
    return X


def write_pool(path, X) -> None:
    X = np.asarray(X, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(X.shape[1])])
        for row in X:
            w.writerow([repr(float(v)) for v in row])


def _num(v):
    if v is None:
        return None
    v = float(v)
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    if math.isnan(v):
        return None
    return v


def design_record(design: IntegralDesign, c: Criterion, objective, relaxation_objective=None,
                  ratio=None, lambda_min_whitened=None, mode=None, alpha=None) -> dict:
    rec = {
        "counts": design.counts.tolist(),
        "k": int(design.k),
        "b": int(design.b),
        "criterion": c.kind,
        "objective": _num(objective),
        "relaxation_objective": _num(relaxation_objective),
        "ratio": _num(ratio),
        "lambda_min_whitened": _num(lambda_min_whitened),
        "mode": mode,
        "alpha": _num(alpha),
    }
    if c.bayes:
        rec["bayes"] = {"prior_lambda": c.prior_lambda, "noise_sigma": c.noise_sigma}
    return rec


def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def read_fractional(path) -> FractionalDesign:
    d = read_json(path)
    try:
        return FractionalDesign.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a fractional design ({exc})") from None


def read_design(path) -> IntegralDesign:
    d = read_json(path)
    try:
        return IntegralDesign(np.asarray(d["counts"]), int(d["k"]), int(d.get("b", 1)))
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a design ({exc})") from None
