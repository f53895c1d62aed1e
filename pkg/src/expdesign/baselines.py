"""Comparison methods: uniform and weighted sampling, Fedorov exchange,
greedy removal, and exhaustive search for small instances.

Random draws use numpy's PCG64 generator (``np.random.default_rng``).
Infinite objectives rank last and compare equal; remaining ties go to the
lexicographically smallest count vector.
"""

from __future__ import annotations

import itertools
import logging
import math
from typing import Optional

import numpy as np

from .core import InputError
from .criteria import Criterion, evaluate_batch
from .relaxation import FractionalDesign
from .rounding import IntegralDesign

log = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10**6
BATCH = 2048


class BudgetExceeded(InputError):
    """Exhaustive enumeration would exceed the configured limit."""


def make_rng(rng=None) -> np.random.Generator:
    """A PCG64 generator from a seed, or ``rng`` itself if it already is one."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _prep(X, c, k):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InputError("pool must be an n x p matrix")
    if not 1 <= k <= X.shape[0]:
        raise InputError(f"need 1 <= k <= n={X.shape[0]}, got k={k}")
    return X, Criterion.parse(c)


def _objectives(c: Criterion, X, count_rows) -> np.ndarray:
    """Criterion value for each row of a (m, n) count matrix, in chunks."""
    count_rows = np.asarray(count_rows, dtype=float)
    out = np.empty(count_rows.shape[0])
    for s in range(0, count_rows.shape[0], BATCH):
        C = count_rows[s:s + BATCH]
        sig = np.einsum("mi,ij,ik->mjk", C, X, X)
        out[s:s + BATCH] = evaluate_batch(c, sig, X)
    return out


def _best(objs, count_vectors) -> int:
    """Index of the best objective; ties to the lexicographically smallest counts."""
    objs = np.asarray(objs, dtype=float)
    best = np.min(objs)
    tied = np.flatnonzero(objs == best)
    if tied.size == 1:
        return int(tied[0])
    return int(min(tied, key=lambda t: tuple(count_vectors(t))))


def _counts_from(idx, n) -> np.ndarray:
    s = np.zeros(n, dtype=int)
    s[np.asarray(idx, dtype=int)] = 1
    return s


def uniform_select(X, c, k: int, repeats: int = 10, rng=None) -> IntegralDesign:
    """Best of ``repeats`` uniformly random k-subsets."""
    X, c = _prep(X, c, k)
    n = X.shape[0]
    rng = make_rng(rng)
    draws = np.array([_counts_from(rng.choice(n, k, replace=False), n) for _ in range(repeats)])
    objs = _objectives(c, X, draws)
    return IntegralDesign(draws[_best(objs, lambda t: draws[t])], k, 1)


def weighted_select(X, c, pi_star: FractionalDesign, k: Optional[int] = None, repeats: int = 10,
                    rng=None, report: Optional[dict] = None) -> IntegralDesign:
    """Best of ``repeats`` draws of k points without replacement, proportional to ``pi_star``.

    Each draw is sequential: the next index is chosen with probability
    proportional to the remaining weights.  If ``pi_star`` has fewer than
    ``k`` positive entries the support is taken whole and the rest is filled
    uniformly; ``report["fallback"]`` records this.
    """
    k = pi_star.k if k is None else k
    X, c = _prep(X, c, k)
    n = X.shape[0]
    rng = make_rng(rng)
    w = np.clip(pi_star.weights, 0.0, None)
    support = np.flatnonzero(w > 0)
    fallback = support.size < k
    if report is not None:
        report["fallback"] = bool(fallback)
    draws = []
    for _ in range(repeats):
        if fallback:
            rest = np.setdiff1d(np.arange(n), support)
            idx = np.concatenate([support, rng.choice(rest, k - support.size, replace=False)])
        else:
            # numpy's weighted choice without replacement keeps the first occurrences of
            # an i.i.d. stream, which is exactly sequential proportional sampling
            idx = rng.choice(n, k, replace=False, p=w / w.sum())
        draws.append(_counts_from(idx, n))
    draws = np.array(draws)
    objs = _objectives(c, X, draws)
    return IntegralDesign(draws[_best(objs, lambda t: draws[t])], k, 1)


class _RankOneEvaluator:
    """Objective values after removals or swaps via Woodbury updates of ``Sigma^{-1}``.

    Supports A, D, V and G.  All values use the same normalization as
    :func:`expdesign.criteria.evaluate`.
    """

    KINDS = "ADVG"

    def __init__(self, c: Criterion, X: np.ndarray, counts: np.ndarray):
        self.c, self.X = c, X
        p = X.shape[1]
        S = (X.T * counts) @ X + c.shift * np.eye(p)
        w, V = np.linalg.eigh(0.5 * (S + S.T))
        if w[0] <= 1e-12 * max(w[-1], 1e-300):
            raise np.linalg.LinAlgError("singular")
        self.inv = (V / w) @ V.T
        self.logdet = float(np.sum(np.log(w)))
        self.p = p
        if c.kind == "V":
            self.M = X.T @ X
            self.base = float(np.sum(self.inv * self.M))

    def removal_values(self, idx) -> np.ndarray:
        """Objective after removing one copy of each ``X[idx]`` (one at a time)."""
        Xi = self.X[idx]
        P = Xi @ self.inv  # rows Sigma^{-1} x_i
        a = np.sum(P * Xi, axis=1)
        denom = 1.0 - a
        bad = denom <= 1e-12
        d = np.where(bad, 1.0, denom)
        kind, p = self.c.kind, self.p
        if kind == "A":
            out = (np.trace(self.inv) + np.sum(P * P, axis=1) / d) / p
        elif kind == "D":
            out = np.exp(-(self.logdet + np.log(d)) / p)
        elif kind == "V":
            out = (self.base + np.einsum("ij,jk,ik->i", P, self.M, P) / d) / self.X.shape[0]
        else:
            lev = np.sum((self.X @ self.inv) * self.X, axis=1)
            cross = self.X @ P.T  # (n, m)
            out = np.max(lev[:, None] + cross**2 / d, axis=0)
        return np.where(bad, np.inf, out)

    def swap_values(self, rem, ins) -> np.ndarray:
        """Objective for every pair (remove ``rem[a]``, insert ``ins[b]``), shape (len(rem), len(ins))."""
        Xr, Xj = self.X[rem], self.X[ins]
        Pr, Pj = Xr @ self.inv, Xj @ self.inv
        arr = np.sum(Pr * Xr, axis=1)[:, None]
        ajj = np.sum(Pj * Xj, axis=1)[None, :]
        arj = Pr @ Xj.T
        # Sigma' = Sigma + U C U^T with U = [x_j, x_r], C = diag(1, -1);
        # K = C^{-1} + U^T Sigma^{-1} U = [[1 + ajj, arj], [arj, arr - 1]]
        k11, k22, k12 = 1.0 + ajj, arr - 1.0, arj
        det = k11 * k22 - k12**2
        kind, p = self.c.kind, self.p
        bad = det >= -1e-12  # det(Sigma')/det(Sigma) = -det(K) must be positive
        dd = np.where(bad, -1.0, det)
        if kind == "D":
            out = np.exp(-(self.logdet + np.log(-dd)) / p)
            return np.where(bad, np.inf, out)
        # tr(Sigma'^{-1} M) = tr(Sigma^{-1} M) - tr(K^{-1} U^T Sigma^{-1} M Sigma^{-1} U)
        if kind == "A":
            Mjj = np.sum(Pj * Pj, axis=1)[None, :]
            Mrr = np.sum(Pr * Pr, axis=1)[:, None]
            Mrj = Pr @ Pj.T
            base, scale = np.trace(self.inv), 1.0 / p
        elif kind == "V":
            Mjj = np.einsum("ij,jk,ik->i", Pj, self.M, Pj)[None, :]
            Mrr = np.einsum("ij,jk,ik->i", Pr, self.M, Pr)[:, None]
            Mrj = Pr @ self.M @ Pj.T
            base, scale = self.base, 1.0 / self.X.shape[0]
        else:  # G: leverages of every pool row for every pair
            Q = self.X @ self.inv
            lev = np.sum(Q * self.X, axis=1)
            uj, ur = Q @ Xj.T, Q @ Xr.T  # (n, J), (n, R)
            out = np.empty(det.shape)
            for r in range(len(rem)):
                # z^T K^{-1} z with z = (uj, ur); K^{-1} = [[k22, -k12], [-k12, k11]] / det
                kk12 = k12[r][None, :]
                q = (k22[r] * uj**2 - 2 * kk12 * uj * ur[:, r:r + 1] + k11[0][None, :] * ur[:, r:r + 1] ** 2)
                out[r] = np.max(lev[:, None] - q / dd[r][None, :], axis=0)
            return np.where(bad, np.inf, out)
        quad = (k22 * Mjj - 2 * k12 * Mrj + k11 * Mrr) / dd
        return np.where(bad, np.inf, (base - quad) * scale)


def _rank(c: Criterion, S) -> np.ndarray:
    w = np.linalg.eigvalsh(S + c.shift * np.eye(S.shape[-1]))
    top = np.max(np.abs(w), axis=-1, keepdims=True)
    return np.sum(w > 1e-12 * np.maximum(top, 1e-300), axis=-1)


def _swap_candidates_full(c, X, counts, rem, ins):
    """Objectives and ranks for every (rem, ins) pair by full recomputation."""
    S = (X.T * counts) @ X
    R, J = len(rem), len(ins)
    objs = np.empty((R, J))
    ranks = np.empty((R, J), dtype=int)
    outer_r = np.einsum("ij,ik->ijk", X[rem], X[rem])
    outer_j = np.einsum("ij,ik->ijk", X[ins], X[ins])
    step = max(1, BATCH // max(J, 1))
    for s in range(0, R, step):
        sig = S[None, None] - outer_r[s:s + step, None] + outer_j[None]
        flat = sig.reshape(-1, *S.shape)
        objs[s:s + step] = evaluate_batch(c, flat, X).reshape(-1, J)
        ranks[s:s + step] = _rank(c, flat).reshape(-1, J)
    return objs, ranks


def fedorov_exchange(X, c, k: int, max_changes: int = 1000, rng=None,
                     fast: bool = False) -> IntegralDesign:
    """Best-pair exchange from a random k-subset.

    ``fast=True`` scores swaps with rank-two Woodbury updates for A, D, V
    and G while the current covariance is nonsingular.  While the current
    objective is infinite, a swap is taken only if it reaches a finite value
    or raises the covariance rank.
    """
    X, c = _prep(X, c, k)
    n = X.shape[0]
    rng = make_rng(rng)
    counts = _counts_from(rng.choice(n, k, replace=False), n)
    cur = float(_objectives(c, X, counts[None])[0])
    for _ in range(max_changes):
        rem, ins = np.flatnonzero(counts), np.flatnonzero(counts == 0)
        if ins.size == 0:
            break
        objs = ranks = None
        if fast and c.kind in _RankOneEvaluator.KINDS and np.isfinite(cur):
            try:
                objs = _RankOneEvaluator(c, X, counts).swap_values(rem, ins)
            except np.linalg.LinAlgError:
                objs = None
        if objs is None:
            objs, ranks = _swap_candidates_full(c, X, counts, rem, ins)

        def vec(t, J=ins.size):
            v = counts.copy()
            v[rem[t // J]] -= 1
            v[ins[t % J]] += 1
            return v

        flat = objs.ravel()
        if np.isfinite(cur) or np.any(np.isfinite(flat)):
            t = _best(flat, vec)
            if np.isfinite(cur) and not flat[t] < cur - 1e-12 * abs(cur):
                break
            cur = float(flat[t])
        else:
            now = int(_rank(c, (X.T * counts) @ X))
            rk = ranks.ravel()
            if rk.max() <= now:
                break
            # most rank gained; ties to the lexicographically smallest counts
            t = _best(-rk.astype(float), vec)
        counts = vec(t)
    return IntegralDesign(counts, k, 1)


def greedy_removal(X, c, k: int, fast: bool = False) -> IntegralDesign:
    """Start from the full pool and repeatedly drop the point whose removal hurts least."""
    X, c = _prep(X, c, k)
    n = X.shape[0]
    counts = np.ones(n, dtype=int)
    for _ in range(n - k):
        idx = np.flatnonzero(counts)
        objs = None
        if fast and c.kind in _RankOneEvaluator.KINDS:
            try:
                objs = _RankOneEvaluator(c, X, counts).removal_values(idx)
            except np.linalg.LinAlgError:
                objs = None
        if objs is None:
            cand = np.repeat(counts[None], idx.size, axis=0)
            cand[np.arange(idx.size), idx] = 0
            objs = _objectives(c, X, cand)

        def vec(t):
            v = counts.copy()
            v[idx[t]] = 0
            return v

        counts = vec(_best(objs, vec))
    return IntegralDesign(counts, k, 1)


def count_designs(n: int, k: int, b: int) -> int:
    """Number of count vectors in ``{0..b}^n`` summing to exactly ``k``."""
    # inclusion-exclusion over coordinates forced above b
    total = 0
    for j in range(0, min(n, k // (b + 1)) + 1):
        total += (-1) ** j * math.comb(n, j) * math.comb(k - j * (b + 1) + n - 1, n - 1)
    return total


def _enumerate(n: int, k: int, b: int):
    """Count vectors summing to ``k`` in ascending lexicographic order."""
    if n == 1:
        if k <= b:
            yield (k,)
        return
    for first in range(0, min(b, k) + 1):
        if k - first > b * (n - 1):
            continue
        for rest in _enumerate(n - 1, k - first, b):
            yield (first,) + rest


def brute_force(X, c, k: int, b: int = 1, limit: int = BRUTE_FORCE_LIMIT) -> IntegralDesign:
    """Exact minimizer over count vectors with ``sum == k`` and entries in ``[0, b]``."""
    X = np.asarray(X, dtype=float)
    c = Criterion.parse(c)
    n = X.shape[0]
    if k > b * n:
        raise InputError(f"k={k} exceeds b*n={b * n}")
    total = count_designs(n, k, b)
    if total > limit:
        raise BudgetExceeded(f"{total} feasible count vectors exceed the limit of {limit}")
    best_val, best_vec = math.inf, None
    gen = _enumerate(n, k, b)
    while True:
        chunk = np.array(list(itertools.islice(gen, BATCH)), dtype=int)
        if chunk.size == 0:
            break
        objs = _objectives(c, X, chunk)
        t = int(np.argmin(objs))  # first minimum is the lexicographically smallest
        if best_vec is None or objs[t] < best_val:
            best_val, best_vec = objs[t], chunk[t]
    return IntegralDesign(best_vec, k, b)
