"""Continuous relaxation solved by projected entropic mirror descent.

The relaxation is parametrized by a probability vector ``omega`` with
``omega_i <= b / k``; the fractional design is ``pi = k * omega``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import InfeasibleError, InputError, weighted_gram
from .criteria import (Criterion, PoolStats, evaluate, grad_sigma, pool_stats, regularity_params,
                       value_and_grad)

log = logging.getLogger(__name__)

EXP_CLAMP = 700.0
MAX_BUDGET = 10**6
STEP_MODES = ("theory", "line_search", "sqrt_decay", "auto")


@dataclass
class FractionalDesign:
    weights: np.ndarray
    k: int
    b: int = 1

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        w = self.weights
        if np.any(w < -1e-12) or np.any(w > self.b + 1e-9) or w.sum() > self.k + 1e-9:
            raise InputError("weights violate 0 <= pi_i <= b, sum(pi) <= k")

    @property
    def omega(self) -> np.ndarray:
        return self.weights / self.k

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "k": self.k, "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "FractionalDesign":
        return cls(np.asarray(d["weights"], dtype=float), int(d["k"]), int(d["b"]))


@dataclass
class MdConfig:
    """Mirror-descent settings.

    ``smoothing_lambda=None`` means ``target_delta / 2``; ``iterations=None``
    means the criterion default (100 for differentiable criteria, 1000
    otherwise) or, in theory mode, :func:`iteration_budget`.
    """

    smoothing_lambda: Optional[float] = None
    iterations: Optional[int] = None
    step_mode: str = "auto"
    gamma0: float = 1.0
    target_delta: float = 0.1

    def __post_init__(self):
        if self.step_mode not in STEP_MODES:
            raise InputError(f"step_mode must be one of {STEP_MODES}")
        if self.iterations is not None and self.iterations < 1:
            raise InputError("iterations must be >= 1")
        if not 0 < self.lam < 1:
            raise InputError("smoothing_lambda must lie in (0, 1)")
        if self.gamma0 <= 0:
            raise InputError("gamma0 must be positive")

    @property
    def lam(self) -> float:
        return self.target_delta / 2 if self.smoothing_lambda is None else self.smoothing_lambda


@dataclass
class MdTrace:
    objective: list = field(default_factory=list)
    step_size: list = field(default_factory=list)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "objective", "step_size"])
        for t, (f, eta) in enumerate(zip(self.objective, self.step_size)):
            w.writerow([t, repr(float(f)), repr(float(eta))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def kl_divergence(y, omega) -> float:
    """``sum_i y_i log(y_i / omega_i)`` with ``0 log 0 = 0``."""
    y, omega = np.asarray(y, dtype=float), np.asarray(omega, dtype=float)
    pos = y > 0
    if np.any(omega[pos] <= 0):
        return math.inf
    return float(np.sum(y[pos] * np.log(y[pos] / omega[pos])))


def project_box_simplex(omega, cap: float) -> np.ndarray:
    """KL projection of a probability vector onto ``{y in simplex : y_i <= cap}``.

    Scans ``q`` over the number of coordinates pinned at ``cap`` (largest
    first) and rescales the rest by a common constant, keeping the feasible
    split with the smallest divergence.
    """
    omega = np.asarray(omega, dtype=float)
    n = omega.size
    if n == 0:
        raise InputError("empty vector")
    if np.any(omega < 0) or abs(omega.sum() - 1.0) > 1e-8:
        raise InputError("omega is not a probability vector")
    if cap * n < 1 - 1e-12:
        raise InfeasibleError(f"cap {cap} admits no probability vector of length {n}")
    return _project(omega, cap)


def _best_split(w_head: np.ndarray, cap: float):
    # w_head: positive coordinates sorted in descending order
    support = w_head.size
    m = np.arange(1, support)
    # mass left after capping the first m; tail sums avoid cancellation in 1 - cumsum
    rest = np.cumsum(w_head[::-1])[::-1][1:]
    kl_prefix = cap * np.cumsum(np.log(cap / w_head))[:-1]
    C = np.where(rest > 0, (1.0 - cap * m) / rest, -1.0)
    ok = (C > 0) & (C * w_head[1:] <= cap * (1 + 1e-12))
    kl = np.where(ok, kl_prefix + C * np.log(np.where(ok, C, 1.0)) * rest, np.inf)
    if np.any(ok):
        # ties go to the larger q, matching a "<=" scan
        j = len(kl) - 1 - int(np.argmin(kl[::-1]))
        best_q, best_C = j + 2, float(C[j])
    else:
        # cap * support == 1: every supported coordinate sits at the cap
        best_q, best_C = support + 1, 0.0
    return best_q, best_C


def _project(omega: np.ndarray, cap: float) -> np.ndarray:
    # unvalidated core of project_box_simplex
    n = omega.size
    if omega.max() <= cap:
        return omega.copy()
    order = np.argsort(-omega, kind="stable")
    w = omega[order]
    support = int(np.count_nonzero(w > 0))
    if support * cap < 1 - 1e-12:
        raise InfeasibleError("zero coordinates cannot receive mass under KL projection")

    # candidate q (number capped = q - 1) ranges over 1 .. support - 1
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        best_q, best_C = _best_split(w[:support], cap)
    out_sorted = np.empty(n)
    out_sorted[: best_q - 1] = cap
    out_sorted[best_q - 1:] = best_C * w[best_q - 1:]
    out = np.empty(n)
    out[order] = out_sorted
    return out


def md_step(omega, grad, eta: float, cap: float) -> np.ndarray:
    """Multiplicative update ``omega * exp(-eta * grad)`` followed by the capped projection."""
    omega = np.asarray(omega, dtype=float)
    arg = -eta * np.asarray(grad, dtype=float)
    pos = omega > 0
    full = pos.all()
    # shifting by the max leaves the normalized result unchanged
    arg -= arg.max() if full else np.max(arg[pos])
    np.maximum(arg, -EXP_CLAMP, out=arg)
    if not full:
        arg[~pos] = 0.0
    y = omega * np.exp(arg)
    y /= y.sum()
    if np.count_nonzero(y) * cap < 1:
        # underflow wiped out too much support; keep coordinates alive at the smallest normal
        y = np.where(pos, np.maximum(y, np.finfo(float).tiny), 0.0)
        y /= y.sum()
    return _project(y, cap)


def smoothed_covariance(X, omega, k: int, lam: float) -> np.ndarray:
    n = X.shape[0]
    S = (X.T * ((k / (1 + lam)) * (np.asarray(omega) + lam / n))) @ X
    return 0.5 * (S + S.T)


def smoothed_objective(c: Criterion, X, omega, k: int, b: int, lam: float) -> float:
    """Smoothed relaxation value; ``log f`` when the criterion runs in log mode."""
    X = np.asarray(X, dtype=float)
    return evaluate(c, smoothed_covariance(X, omega, k, lam), X, log=c.log_mode)


def _smoothed_grad(c: Criterion, X, omega, k: int, lam: float) -> np.ndarray:
    G = grad_sigma(c, smoothed_covariance(X, omega, k, lam), X)
    return (k / (1 + lam)) * np.einsum("ij,jk,ik->i", X, G, X)


def budget_from_params(delta: float, mu0: float, L: float, k: int, n: int,
                       log_mode: bool = False) -> int:
    """Iteration count ``delta^-2 mu0^-2 L^2 k^2 log n`` with unit constant.

    In log mode the ``mu0^-2`` factor is dropped.  Capped at ``MAX_BUDGET``.
    """
    val = L**2 * k**2 * math.log(n) / delta**2
    if not log_mode:
        val /= mu0**2
    T = max(1, math.ceil(val))
    if T > MAX_BUDGET:
        log.warning("iteration budget %.3g capped at %d", val, MAX_BUDGET)
        T = MAX_BUDGET
    return T


def iteration_budget(c: Criterion, stats: PoolStats, delta: float, k: int, b: int, n: int) -> int:
    if not 0 < delta < 1:
        raise InputError("delta must lie in (0, 1)")
    L, mu0, log_mode = regularity_params(c, stats, k * delta / 2, k, b)
    return budget_from_params(delta, mu0, L, k, n, log_mode)


def pad_to_budget(pi: FractionalDesign) -> FractionalDesign:
    """Raise coordinates (lowest index first) toward ``b`` until they sum to ``k``."""
    w = np.clip(pi.weights.astype(float), 0.0, pi.b)
    if pi.k > pi.b * w.size:
        raise InfeasibleError(f"k={pi.k} exceeds b*n={pi.b * w.size}")
    need = pi.k - w.sum()
    for i in range(w.size):
        if need <= 0:
            break
        add = min(pi.b - w[i], need)
        w[i] += add
        need -= add
    if need < 0:
        # floating overshoot: shave the excess off the largest coordinate
        w[int(np.argmax(w))] += need
    return FractionalDesign(w, pi.k, pi.b)


def _resolve_mode(c: Criterion, config: MdConfig) -> str:
    if config.step_mode != "auto":
        return config.step_mode
    return "line_search" if c.differentiable else "sqrt_decay"


def solve_relaxation(c: Criterion, X, k: int, b: int = 1, config: MdConfig | None = None):
    """Approximately minimize the relaxed criterion over ``{0 <= pi <= b, sum pi = k}``.

    Returns ``(FractionalDesign, MdTrace)``.  Theory and sqrt-decay modes
    return the running average of the iterates; line-search mode, whose
    iterates decrease the objective monotonically, returns the last one.
    """
    config = config or MdConfig()
    c = Criterion.parse(c)
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if k > b * n:
        raise InputError(f"infeasible budget: k={k} > b*n={b * n}")
    if k < 1:
        raise InputError("k must be positive")
    cap = min(1.0, b / k)
    lam = config.lam
    mode = _resolve_mode(c, config)
    trace = MdTrace()
    if n == 1 or cap * n <= 1 + 1e-12:
        # the capped simplex is a single point
        omega = np.full(n, 1.0 / n)
        trace.objective.append(smoothed_objective(c, X, omega, k, b, lam))
        trace.step_size.append(0.0)
        return pad_to_budget(FractionalDesign(k * omega, k, b)), trace

    if config.iterations is not None:
        T = config.iterations
    elif mode == "theory":
        T = iteration_budget(c, pool_stats(X), config.target_delta, k, b, n)
    else:
        T = 100 if mode == "line_search" else 1000

    def evaluate_at(w):
        val, G = value_and_grad(c, smoothed_covariance(X, w, k, lam), X)
        if G is None:
            return val, None
        return val, (k / (1 + lam)) * np.einsum("ij,jk,ik->i", X, G, X)

    def plain(val):
        # the sqrt-decay overshoot test compares actual criterion values
        return math.exp(val) if c.log_mode else val

    L_tilde = None
    if mode == "theory":
        L, _, _ = regularity_params(c, pool_stats(X), k * lam, k, b)
        L_tilde = k * L
    omega = np.full(n, 1.0 / n)
    total = np.zeros(n)
    f_cur, g = evaluate_at(omega)
    if g is None:
        raise InputError("smoothed covariance is singular; the pool does not span its space")
    gamma = config.gamma0
    eta_prev = 0.5
    # sqrt-decay steps are measured in units of the initial gradient sup-norm
    g_scale = float(np.max(np.abs(g))) or 1.0
    for t in range(T):
        total += omega
        if mode == "theory":
            eta = math.sqrt(math.log(n) / (t + 1)) / L_tilde
            nxt = md_step(omega, g, eta, cap)
            f_nxt, g_nxt = evaluate_at(nxt)
        elif mode == "line_search":
            # preliminary step: twice the last accepted one (1 at the start)
            spread = float(g.max() - g.min())
            eta = 2 * eta_prev
            if spread > 0:
                # beyond this the multiplicative update saturates the exponent clamp
                eta = min(eta, EXP_CLAMP / spread)
            for _ in range(60):
                nxt = md_step(omega, g, eta, cap)
                decrease = float(g @ (nxt - omega))
                if -decrease <= 1e-15 * abs(f_cur):
                    # predicted progress is below float resolution: stay put
                    nxt, eta, f_nxt, g_nxt = omega, 0.0, f_cur, g
                    break
                f_nxt, g_nxt = evaluate_at(nxt)
                if f_nxt <= f_cur + 0.5 * decrease:
                    break
                eta *= 0.5
            else:
                nxt, eta, f_nxt, g_nxt = omega, 0.0, f_cur, g
            eta_prev = max(eta, 0.5 ** 60)
        else:
            for _ in range(60):
                eta = gamma / (math.sqrt(t + 1) * g_scale)
                nxt = md_step(omega, g, eta, cap)
                f_nxt, g_nxt = evaluate_at(nxt)
                if plain(f_nxt) < 2 * plain(f_cur):
                    break
                gamma *= 0.5
        if g_nxt is None:
            raise InputError("smoothed covariance became singular")
        trace.objective.append(f_cur)
        trace.step_size.append(eta)
        omega, f_cur, g = nxt, f_nxt, g_nxt

    if mode == "line_search":
        result = omega
    else:
        result = total / T
    return pad_to_budget(FractionalDesign(np.minimum(k * result, b), k, b)), trace


def relaxation_objective(c: Criterion, X, pi: FractionalDesign) -> float:
    """Unsmoothed criterion value ``f(sum_i pi_i x_i x_i^T)``."""
    X = np.asarray(X, dtype=float)
    return evaluate(Criterion.parse(c), weighted_gram(X, pi.weights), X)
