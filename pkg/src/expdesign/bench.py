"""Synthetic pools and the method-comparison benchmark."""

from __future__ import annotations

import csv
import io
import math
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .baselines import fedorov_exchange, greedy_removal, uniform_select, weighted_select
from .core import InputError
from .criteria import Criterion, evaluate
from .relaxation import MdConfig, solve_relaxation
from .rounding import round_fractional

METHODS = ("UNIFORM", "WEIGHTED", "FEDOROV", "GREEDY", "SWAPPING")
CSV_HEADER = ["method", "criterion", "n", "p", "k", "objective", "runtime_s", "seed"]
WORKERS_ENV = "EXPDESIGN_BENCH_WORKERS"


@dataclass
class SyntheticSpec:
    n: int
    p: int
    seed: int = 0
    top_eig_scale: Optional[float] = None  # default n / 2

    def __post_init__(self):
        if self.n % 2 or self.p % 2:
            raise InputError("n and p must be even")
        if not self.n >= self.p >= 2:
            raise InputError("need n >= p >= 2")
        if self.top_eig_scale is not None and not self.top_eig_scale > 0:
            raise InputError("top_eig_scale must be positive")


def _block(rng, rows, cols, eigs):
    G = rng.standard_normal((rows, cols))
    U, _, Vt = np.linalg.svd(G, full_matrices=False)
    return (U * np.sqrt(eigs)) @ Vt


def gen_synthetic(spec: SyntheticSpec) -> np.ndarray:
    """Block-diagonal pool whose two blocks have Gram spectra ``scale/j^2`` and ``scale/j``."""
    rng = np.random.default_rng(spec.seed)
    h, q = spec.n // 2, spec.p // 2
    scale = spec.n / 2 if spec.top_eig_scale is None else spec.top_eig_scale
    j = np.arange(1, q + 1, dtype=float)
    X = np.zeros((spec.n, spec.p))
    X[:h, :q] = _block(rng, h, q, scale / j**2)
    X[h:, q:] = _block(rng, h, q, scale / j)
    return X


@dataclass
class BenchRow:
    method: str
    criterion: str
    n: int
    p: int
    k: int
    objective: float
    runtime_s: float
    seed: int
    failed: bool = False
    error: str = ""


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _cell(X, c: Criterion, k: int, methods, seeds, epsilon: float) -> List[BenchRow]:
    n, p = X.shape
    rows = []
    relax, relax_time, relax_err = None, 0.0, None
    if "WEIGHTED" in methods or "SWAPPING" in methods:
        t0 = time.perf_counter()
        try:
            relax, _ = solve_relaxation(c, X, k, 1, MdConfig(target_delta=epsilon / 2))
        except Exception as exc:  # recorded, never aborts the grid
            relax_err = f"{type(exc).__name__}: {exc}"
        relax_time = time.perf_counter() - t0
    swap_cache = {}
    for seed in seeds:
        for m in methods:
            t0 = time.perf_counter()
            extra = 0.0
            try:
                if m == "UNIFORM":
                    d = uniform_select(X, c, k, rng=seed)
                elif m == "FEDOROV":
                    d = fedorov_exchange(X, c, k, rng=seed, fast=True)
                elif m == "GREEDY":
                    d = greedy_removal(X, c, k, fast=True)
                elif m in ("WEIGHTED", "SWAPPING"):
                    if relax is None:
                        raise RuntimeError(relax_err)
                    extra = relax_time
                    if m == "WEIGHTED":
                        d = weighted_select(X, c, relax, k, rng=seed)
                    else:
                        # deterministic given the pool; reuse across seeds
                        if "d" not in swap_cache:
                            t1 = time.perf_counter()
                            swap_cache["d"] = round_fractional(X, c, relax, None, "practical")[0]
                            swap_cache["t"] = time.perf_counter() - t1
                        d = swap_cache["d"]
                        t0 = time.perf_counter() - swap_cache["t"]
                else:
                    raise InputError(f"unknown method {m!r}")
                obj = evaluate(c, d.covariance(X), X)
                rows.append(BenchRow(m, c.kind, n, p, k, obj,
                                     time.perf_counter() - t0 + extra, seed))
            except Exception as exc:
                rows.append(BenchRow(m, c.kind, n, p, k, math.nan,
                                     time.perf_counter() - t0 + extra, seed,
                                     failed=True, error=f"{type(exc).__name__}: {exc}"))
    return rows


def run_bench(pools: Sequence, criteria: Sequence, k_values: Sequence[int],
              methods: Sequence[str] = METHODS, seeds: Sequence[int] = (0,),
              epsilon: float = 0.25, workers: Optional[int] = None) -> List[BenchRow]:
    """One row per (pool, criterion, k, seed, method), in that nesting order.

    WEIGHTED and SWAPPING share one relaxation solve per (pool, criterion,
    k); its wall time is added to both.  Failures become rows with
    ``failed=True``.  Cells run on ``workers`` threads (default from the
    ``EXPDESIGN_BENCH_WORKERS`` environment variable, else 1).
    """
    methods = [m.upper() for m in methods]
    for m in methods:
        if m not in METHODS:
            raise InputError(f"unknown method {m!r}; expected one of {METHODS}")
    crits = [Criterion.parse(c) for c in criteria]
    cells = [(np.asarray(X, dtype=float), c, int(k))
             for X in pools for c in crits for k in k_values]
    workers = _workers() if workers is None else workers

    def go(cell):
        return _cell(*cell, methods, list(seeds), epsilon)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(go, cells))
    else:
        parts = [go(cell) for cell in cells]
    return [r for part in parts for r in part]


def _fmt_obj(row: BenchRow) -> str:
    if row.failed:
        return "Error"
    if math.isinf(row.objective):
        return "Inf"
    return repr(float(row.objective))


def emit_table(rows: Sequence[BenchRow], fmt: str = "csv") -> str:
    """Render rows as CSV or as markdown tables grouped by k (medians over seeds)."""
    if not rows:
        raise InputError("no rows to emit")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.method, r.criterion, r.n, r.p, r.k, _fmt_obj(r),
                        repr(float(r.runtime_s)), r.seed])
        return buf.getvalue()
    if fmt not in ("md", "markdown"):
        raise InputError(f"unknown table format {fmt!r}")
    methods = list(dict.fromkeys(r.method for r in rows))
    crits = list(dict.fromkeys(r.criterion for r in rows))
    out = []
    for k in dict.fromkeys(r.k for r in rows):
        out.append(f"### k = {k}\n")
        out.append("| method | " + " | ".join(crits) + " |")
        out.append("|---" * (len(crits) + 1) + "|")
        for m in methods:
            cells = []
            for cr in crits:
                sel = [r for r in rows if r.k == k and r.method == m and r.criterion == cr]
                if not sel:
                    cells.append("")
                    continue
                ok = [r for r in sel if not r.failed]
                rt = statistics.median(r.runtime_s for r in sel)
                if not ok:
                    cells.append(f"Error ({rt:.2g})")
                    continue
                obj = statistics.median(r.objective for r in ok)
                val = "Inf" if math.isinf(obj) else f"{obj:.4g}"
                cells.append(f"{val} ({rt:.2g})")
            out.append(f"| {m} | " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


def parse_table(text: str) -> List[BenchRow]:
    """Inverse of the CSV form of :func:`emit_table`."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != CSV_HEADER:
        raise InputError(f"unexpected header {header}")
    rows = []
    for rec in reader:
        m, cr, n, p, k, obj, rt, seed = rec
        failed = obj == "Error"
        rows.append(BenchRow(m, cr, int(n), int(p), int(k),
                             math.nan if failed else float(obj), float(rt), int(seed), failed))
    return rows
