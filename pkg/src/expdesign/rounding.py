"""Swap rounding of a fractional design to an integral one.

The pool is whitened by the fractional covariance so that the target
becomes ``lambda_min(sum_i s_i x_i x_i^T) >= 1 - 3 eps``.  Swaps are driven
by the closed-form l_{1/2} player matrices ``A = (cI + alpha Z)^{-2}``.
Multiplicities ``b > 1`` are handled through a counts vector, so scores are
computed once per distinct point.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .core import ConfigurationError, EigenDecomp, InputError, sym, weighted_gram
from .criteria import Criterion, evaluate, t_optimal_exact
from .relaxation import FractionalDesign, MdConfig, solve_relaxation

log = logging.getLogger(__name__)

PRACTICAL_NU = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.5, 3.0, 4.0, 5.0)
RANK_RTOL = 1e-12
# Z is rebuilt from the counts every this many swaps to stop rank-2 update drift
REFRESH_EVERY = 50


class NoSwap(Exception):
    """No admissible swap exists in the current state."""


class NoEligibleRemoval(NoSwap):
    """Every selected point has ``2 alpha <A^{1/2}, x x^T> >= 1``."""


class NoEligibleInsertion(NoSwap):
    """Every active point is already selected ``b`` times."""


class _AlreadyGood:
    def __repr__(self):
        return "ALREADY_GOOD"


ALREADY_GOOD = _AlreadyGood()


@dataclass
class IntegralDesign:
    counts: np.ndarray
    k: int
    b: int = 1

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise InputError("counts must be a vector")
        if not np.all(np.equal(np.mod(c, 1), 0)):
            raise InputError("counts must be integers")
        self.counts = c.astype(int)
        if np.any(self.counts < 0) or np.any(self.counts > self.b):
            raise InputError(f"counts must lie in [0, {self.b}]")
        if self.counts.sum() > self.k:
            raise InputError(f"counts sum to {self.counts.sum()} > k={self.k}")

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.counts)

    def covariance(self, X) -> np.ndarray:
        return weighted_gram(np.asarray(X, dtype=float), self.counts)

    def to_dict(self) -> dict:
        return {"counts": self.counts.tolist(), "k": int(self.k), "b": int(self.b)}


@dataclass
class WhitenedPool:
    """Pool expressed in coordinates where the fractional covariance is the identity.

    ``points`` has one row per original point; ``active[i]`` is False for
    points outside the span of the fractional covariance, which are never
    inserted.  When that covariance is singular ``rank_basis`` holds the
    ``p x r`` orthonormal basis of its span and ``transform`` is ``r x p``.
    """

    points: np.ndarray
    transform: np.ndarray
    active: np.ndarray
    rank_basis: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def gram(self, counts) -> np.ndarray:
        return weighted_gram(self.points, counts)


def whiten(X, pi: FractionalDesign) -> WhitenedPool:
    """Map ``x_i -> Sigma_hat^{-1/2} x_i`` with ``Sigma_hat = sum_i pi_i x_i x_i^T``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != pi.weights.size:
        raise InputError("pool and fractional design disagree on n")
    if not np.any(X):
        raise InputError("degenerate pool: every point is zero")
    S = weighted_gram(X, pi.weights)
    w, V = np.linalg.eigh(S)
    if w[-1] <= 0:
        raise InputError("degenerate design: fractional covariance is zero")
    keep = w > RANK_RTOL * w[-1]
    if keep.all():
        T = sym((V / np.sqrt(w)) @ V.T)
        return WhitenedPool(X @ T, T, np.ones(X.shape[0], dtype=bool))
    U = V[:, keep]
    T = (U / np.sqrt(w[keep])).T  # r x p
    resid = np.linalg.norm(X - (X @ U) @ U.T, axis=1)
    active = resid <= 1e-8 * np.maximum(np.linalg.norm(X, axis=1), 1e-300)
    return WhitenedPool(X @ T.T, T, active, U)


def find_constant(z_eig: EigenDecomp, alpha: float, tol: Optional[float] = None) -> float:
    """Unique ``c`` with ``tr((cI + alpha Z)^{-2}) = 1`` and ``cI + alpha Z > 0``, by bisection."""
    if not alpha > 0:
        raise InputError("alpha must be positive")
    lam = np.asarray(z_eig.eigenvalues, dtype=float)
    p = lam.size
    if tol is None:
        tol = 1e-8 * max(1.0, math.sqrt(p))
    base = alpha * lam
    lo, hi = -base[0], math.sqrt(p)
    # the interval is open at lo, where the trace blows up
    lo += 1e-12 * (hi - lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.sum((mid + base) ** -2.0) > 1:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _inverse_spectrum(z_eig: EigenDecomp, alpha: float, c: float) -> np.ndarray:
    shifted = c + alpha * z_eig.eigenvalues
    if np.any(shifted <= 0):
        raise ArithmeticError(f"cI + alpha Z is not positive definite (c={c})")
    return 1.0 / shifted


def player_matrices(z_eig: EigenDecomp, alpha: float, c: float) -> Tuple[np.ndarray, np.ndarray]:
    """``A = (cI + alpha Z)^{-2}`` and ``A^{1/2} = (cI + alpha Z)^{-1}``."""
    d = _inverse_spectrum(z_eig, alpha, c)
    V = z_eig.eigenvectors
    return sym((V * d**2) @ V.T), sym((V * d) @ V.T)


@dataclass
class SwapState:
    counts: np.ndarray
    z_eig: EigenDecomp
    c: float
    alpha: float
    iteration: int = 0

    @property
    def lambda_min(self) -> float:
        return float(self.z_eig.eigenvalues[0])


class SwapChoice(NamedTuple):
    remove: int
    insert: int
    removal_score: float
    insertion_score: float


def _scores(state: SwapState, wpool: WhitenedPool):
    d = _inverse_spectrum(state.z_eig, state.alpha, state.c)
    Y2 = (wpool.points @ state.z_eig.eigenvectors) ** 2
    return Y2 @ (d**2), Y2 @ d  # <A, xx^T>, <A^{1/2}, xx^T>


def select_swap(state: SwapState, wpool: WhitenedPool, b: int, threshold: Optional[float] = None):
    """Best (remove, insert) pair for the current player matrices.

    Returns :data:`ALREADY_GOOD` when ``threshold`` is given and already
    exceeded by ``lambda_min(Z)``.  Ties go to the lowest index.
    """
    if threshold is not None and state.lambda_min > threshold:
        return ALREADY_GOOD
    a, h = _scores(state, wpool)
    two_ah = 2 * state.alpha * h
    removable = (state.counts >= 1) & (two_ah < 1)
    if not removable.any():
        raise NoEligibleRemoval("no selected point satisfies 2 alpha <A^1/2, xx^T> < 1")
    insertable = (state.counts < b) & wpool.active
    if not insertable.any():
        raise NoEligibleInsertion("every active point is at its multiplicity cap")
    with np.errstate(divide="ignore"):
        rem = np.where(removable, a / np.where(removable, 1 - two_ah, 1.0), np.inf)
    ins = np.where(insertable, a / (1 + two_ah), -np.inf)
    i, j = int(np.argmin(rem)), int(np.argmax(ins))
    return SwapChoice(i, j, float(rem[i]), float(ins[j]))


@dataclass
class IterationRecord:
    lambda_min: float
    removal_score: float
    insertion_score: float
    alpha_root_inner: float
    player_inner: float
    c: float


@dataclass
class RunDiagnostics:
    alpha: float
    mode: str
    epsilon: Optional[float]
    initial_Z: np.ndarray
    records: List[IterationRecord] = field(default_factory=list)
    swaps: List[Tuple[int, int]] = field(default_factory=list)
    stop_reason: str = ""
    final_lambda_min: float = float("nan")
    regret_slack: float = float("nan")
    certificate_ok: bool = True
    # chosen point vectors (whitened) so certificates can be re-derived without the pool
    swap_vectors: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "lambda_min", "removal_score", "insertion_score", "c_t"])
        for t, r in enumerate(self.records, start=1):
            w.writerow([t, repr(r.lambda_min), repr(r.removal_score),
                        repr(r.insertion_score), repr(r.c)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


class Certificate(NamedTuple):
    lhs: float
    rhs: float
    slack: float
    tolerance: float
    ok: bool


def regret_certificate(diag: RunDiagnostics, initial_Z, swaps, alpha: float) -> Certificate:
    """Check ``-lambda_min(Z_T) <= sum_t (removal_t - insertion_t) + 2 sqrt(p) / alpha``.

    ``swaps`` is a list of ``(out_point, in_point)`` vector pairs.  The slack
    (right minus left) is nonnegative up to ``1e-6 * T`` for a correct run.
    """
    Z = np.array(initial_Z, dtype=float)
    p = Z.shape[0]
    for out_pt, in_pt in swaps:
        Z += np.outer(in_pt, in_pt) - np.outer(out_pt, out_pt)
    lhs = -float(np.linalg.eigvalsh(sym(Z))[0])
    recs = diag.records[: len(swaps)]
    rhs = sum(r.removal_score - r.insertion_score for r in recs) + 2 * math.sqrt(p) / alpha
    slack = rhs - lhs
    tol = 1e-6 * max(len(swaps), 1)
    return Certificate(lhs, rhs, slack, tol, slack >= -tol)


def top_k_counts(weights, k: int, b: int) -> np.ndarray:
    """Largest-weight points first, each filled up to ``b``; ties to the lowest index."""
    order = np.argsort(-np.asarray(weights, dtype=float), kind="stable")
    counts = np.zeros(len(order), dtype=int)
    left = k
    for i in order:
        if left <= 0:
            break
        counts[i] = min(b, left)
        left -= counts[i]
    return counts


def _eig(Z) -> EigenDecomp:
    w, V = np.linalg.eigh(Z)
    return EigenDecomp(w, V)


def _rank_deficient(eig: EigenDecomp) -> bool:
    w = eig.eigenvalues
    return w[0] <= RANK_RTOL * max(abs(w[-1]), 1e-300)


def _run(wpool: WhitenedPool, counts0, k: int, b: int, alpha: float, mode: str,
         epsilon: Optional[float], max_iter: int):
    """One swap run; returns (best counts, diagnostics)."""
    counts = np.array(counts0, dtype=int)
    r = wpool.dim
    X = wpool.points
    Z = wpool.gram(counts)
    eig = _eig(Z)
    diag = RunDiagnostics(alpha=alpha, mode=mode, epsilon=epsilon, initial_Z=Z.copy())
    threshold = 1 - 3 * epsilon if mode == "theory" else None
    best_counts, best_lmin = counts.copy(), float(eig.eigenvalues[0])
    stale = 0
    seen = {counts.tobytes()}
    reason = "max_iterations"
    for t in range(1, max_iter + 1):
        lmin = float(eig.eigenvalues[0])
        if threshold is not None and lmin > threshold:
            reason = "threshold"
            break
        c = find_constant(eig, alpha)
        state = SwapState(counts, eig, c, alpha, t)
        try:
            choice = select_swap(state, wpool, b)
        except NoEligibleRemoval:
            reason = "no_eligible_removal"
            break
        except NoEligibleInsertion:
            reason = "no_eligible_insertion"
            break
        d = _inverse_spectrum(eig, alpha, c)
        lam = eig.eigenvalues
        diag.records.append(IterationRecord(lmin, choice.removal_score, choice.insertion_score,
                                            float(alpha * np.sum(d * lam)),
                                            float(np.sum(d**2 * lam)), c))
        i, j = choice.remove, choice.insert
        diag.swaps.append((i, j))
        diag.swap_vectors.append((X[i].copy(), X[j].copy()))
        counts[i] -= 1
        counts[j] += 1
        if t % REFRESH_EVERY == 0:
            Z = wpool.gram(counts)
        else:
            Z = Z + np.outer(X[j], X[j]) - np.outer(X[i], X[i])
            Z = 0.5 * (Z + Z.T)
        eig = _eig(Z)
        if mode == "practical":
            new = float(eig.eigenvalues[0])
            if new > best_lmin:
                best_lmin, best_counts, stale = new, counts.copy(), 0
            elif not _rank_deficient(eig):
                stale += 1
                if stale >= r:
                    reason = "stalled"
                    break
            key = counts.tobytes()
            if key in seen:
                reason = "revisit"
                break
            seen.add(key)
    else:
        if threshold is not None and float(eig.eigenvalues[0]) > threshold:
            reason = "threshold"
    if mode == "theory":
        best_counts, best_lmin = counts, float(eig.eigenvalues[0])
    diag.stop_reason = reason
    diag.final_lambda_min = best_lmin
    cert = regret_certificate(diag, diag.initial_Z, diag.swap_vectors, alpha)
    diag.regret_slack, diag.certificate_ok = cert.slack, cert.ok
    return best_counts, diag


def _check_pi(pi: FractionalDesign):
    if abs(pi.weights.sum() - pi.k) > 1e-6 * max(1, pi.k):
        raise InputError(f"fractional design sums to {pi.weights.sum():.9g}, expected k={pi.k}")


def round_design(wpool: WhitenedPool, pi: FractionalDesign, epsilon: Optional[float] = None,
                 mode: str = "theory", *, init=None, alpha_grid=None,
                 max_iterations: Optional[int] = None, workers: int = 1):
    """Round ``pi`` to an integral design by regret-minimizing swaps.

    Parameters
    ----------
    wpool : WhitenedPool
        Output of :func:`whiten` for the same ``pi``.
    pi : FractionalDesign
        Fractional design with ``sum(pi) == k``.
    epsilon : float
        Accuracy; required in theory mode (``0 < epsilon <= 1/3``,
        ``k >= 5 p / epsilon^2``), ignored in practical mode.
    mode : {"theory", "practical"}
    init : array_like of int, optional
        Starting counts (default: top-k of ``pi``).
    alpha_grid : sequence of float, optional
        Practical mode only; defaults to ``nu * sqrt(p)`` over the standard grid.
    max_iterations : int, optional
        Theory mode defaults to ``ceil(k / epsilon)``; practical mode to
        ``max(1000, 10 k)``.
    workers : int
        Threads used to run the practical alpha grid.

    Returns
    -------
    (IntegralDesign, RunDiagnostics)
    """
    _check_pi(pi)
    k, b, p = pi.k, pi.b, wpool.dim
    counts0 = top_k_counts(pi.weights, k, b) if init is None else np.asarray(init, dtype=int)
    IntegralDesign(counts0, k, b)  # validates init
    if counts0.sum() != k:
        raise InputError("initial counts must sum to k")

    if mode == "theory":
        if epsilon is None or not 0 < epsilon <= 1 / 3:
            raise ConfigurationError(f"theory mode needs 0 < epsilon <= 1/3, got {epsilon}")
        if epsilon == 1 / 3:
            log.warning("epsilon = 1/3 makes the stopping threshold 1 - 3 eps = 0")
        if k < 5 * p / epsilon**2:
            raise ConfigurationError(
                f"theory mode needs k >= 5p/eps^2 = {5 * p / epsilon**2:.6g}, got k={k}")
        alpha = math.sqrt(p) / epsilon
        T = math.ceil(k / epsilon) if max_iterations is None else max_iterations
        counts, diag = _run(wpool, counts0, k, b, alpha, "theory", epsilon, T)
        if diag.final_lambda_min <= 1 - 3 * epsilon:
            log.warning("swap budget exhausted with lambda_min %.6g <= 1 - 3 eps",
                        diag.final_lambda_min)
        return IntegralDesign(counts, k, b), diag

    if mode != "practical":
        raise InputError(f"unknown rounding mode {mode!r}")
    grid = [nu * math.sqrt(p) for nu in PRACTICAL_NU] if alpha_grid is None else list(alpha_grid)
    T = max(1000, 10 * k) if max_iterations is None else max_iterations

    def one(alpha):
        return _run(wpool, counts0, k, b, alpha, "practical", epsilon, T)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            runs = list(ex.map(one, grid))
    else:
        runs = [one(a) for a in grid]
    # first alpha wins ties
    best = max(range(len(runs)), key=lambda r: (runs[r][1].final_lambda_min, -r))
    counts, diag = runs[best]
    return IntegralDesign(counts, k, b), diag


def select(X, c, k: int, b: int = 1, epsilon: float = 0.25, mode: str = "theory",
           config: Optional[MdConfig] = None, **round_kw):
    """Relax, whiten and round.  Returns ``(IntegralDesign, report)``.

    The report holds the integral and relaxation objectives, their ratio,
    the whitened minimum eigenvalue, the mode, alpha, the fractional design
    and the rounding diagnostics.
    """
    X = np.asarray(X, dtype=float)
    c = Criterion.parse(c)
    if c.kind == "T":
        counts = t_optimal_exact(X, k, b)
        design = IntegralDesign(counts, k, b)
        obj = evaluate(c, design.covariance(X), X)
        pi = FractionalDesign(counts.astype(float), k, b)
        return design, {"objective": obj, "relaxation_objective": obj, "ratio": 1.0,
                        "lambda_min_whitened": 1.0, "mode": mode, "alpha": None,
                        "pi": pi, "diagnostics": None}
    if config is None:
        config = MdConfig(target_delta=epsilon / 2)
    pi, _ = solve_relaxation(c, X, k, b, config)
    return round_fractional(X, c, pi, epsilon, mode, **round_kw)


def round_fractional(X, c, pi: FractionalDesign, epsilon: Optional[float] = 0.25,
                     mode: str = "theory", **round_kw):
    """Whiten and round an existing fractional design; same return value as :func:`select`."""
    X = np.asarray(X, dtype=float)
    c = Criterion.parse(c)
    wpool = whiten(X, pi)
    design, diag = round_design(wpool, pi, epsilon, mode, **round_kw)
    obj = evaluate(c, design.covariance(X), X)
    rel = evaluate(c, weighted_gram(X, pi.weights), X)
    ratio = obj / rel if np.isfinite(obj) and rel > 0 else math.inf
    lmin = float(np.linalg.eigvalsh(wpool.gram(design.counts))[0])
    return design, {"objective": obj, "relaxation_objective": rel, "ratio": ratio,
                    "lambda_min_whitened": lmin, "mode": mode, "alpha": diag.alpha,
                    "pi": pi, "diagnostics": diag}
