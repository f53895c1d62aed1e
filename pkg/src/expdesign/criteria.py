"""Optimality criteria: evaluation, subgradients and regularity constants.

All criteria are normalized so that ``f(t * S) = f(S) / t`` and smaller is
better.  Singular covariances evaluate to ``inf`` for every kind that needs
an inverse, so designs that do not span the space rank last.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import InputError, SingularityError, sym

KINDS = ("A", "D", "T", "E", "V", "G")
DIFFERENTIABLE = frozenset("ADTV")

# relative eigenvalue threshold below which a covariance is treated as singular
SINGULAR_RTOL = 1e-12
_TINY = float(np.finfo(float).tiny)


@dataclass(frozen=True)
class Criterion:
    kind: str
    prior_lambda: Optional[float] = None
    noise_sigma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown criterion {self.kind!r}; expected one of {KINDS}")
        if (self.prior_lambda is None) != (self.noise_sigma is None):
            raise InputError("Bayesian criteria need both prior_lambda and noise_sigma")
        if self.bayes and (self.prior_lambda <= 0 or self.noise_sigma <= 0):
            raise InputError("prior_lambda and noise_sigma must be positive")

    @property
    def bayes(self) -> bool:
        return self.prior_lambda is not None

    @property
    def shift(self) -> float:
        """Multiple of the identity added to the covariance (0 for classical)."""
        return self.prior_lambda / self.noise_sigma**2 if self.bayes else 0.0

    @property
    def needs_pool(self) -> bool:
        return self.kind in ("V", "G")

    @property
    def log_mode(self) -> bool:
        # D is not convex; its relaxation is run on -(1/p) log det instead
        return self.kind == "D"

    @property
    def differentiable(self) -> bool:
        return self.kind in DIFFERENTIABLE

    @property
    def name(self) -> str:
        return self.kind

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.bayes:
            d.update(prior_lambda=self.prior_lambda, noise_sigma=self.noise_sigma)
        return d

    @classmethod
    def parse(cls, spec) -> "Criterion":
        if isinstance(spec, Criterion):
            return spec
        if isinstance(spec, dict):
            return cls(spec["kind"], spec.get("prior_lambda"), spec.get("noise_sigma"))
        return cls(str(spec).upper())


class PoolStats(NamedTuple):
    sigma_lo: float
    sigma_hi: float
    max_norm: float
    dim: int


def pool_stats(X) -> PoolStats:
    """Spectral bounds of ``X^T X / n`` and the largest row norm."""
    X = np.asarray(X, dtype=float)
    w = np.linalg.eigvalsh(sym(X.T @ X / X.shape[0]))
    return PoolStats(max(float(w[0]), 0.0), float(w[-1]),
                     float(np.max(np.linalg.norm(X, axis=1))), X.shape[1])


def _check_pool(c: Criterion, X):
    if c.needs_pool:
        if X is None:
            raise InputError(f"criterion {c.kind} needs the design pool")
        return np.asarray(X, dtype=float)
    return None


def _is_singular(w: np.ndarray) -> np.ndarray:
    top = np.max(np.abs(w), axis=-1)
    return w[..., 0] <= SINGULAR_RTOL * np.maximum(top, np.finfo(float).tiny)


def evaluate_batch(c: Criterion, sigmas, X=None, log: bool = False) -> np.ndarray:
    """Evaluate ``c`` on a stack of covariances of shape ``(m, p, p)``.

    With ``log=True`` the D criterion is returned as ``-(1/p) log det``;
    other kinds ignore the flag.
    """
    X = _check_pool(c, X)
    sigmas = np.asarray(sigmas, dtype=float)
    p = sigmas.shape[-1]
    sigmas = 0.5 * (sigmas + np.swapaxes(sigmas, -1, -2))
    if c.bayes:
        sigmas = sigmas + c.shift * np.eye(p)
    kind = c.kind
    if kind == "T":
        tr = np.trace(sigmas, axis1=-2, axis2=-1)
        with np.errstate(divide="ignore"):
            return np.where(tr > 0, p / np.where(tr > 0, tr, 1.0), np.inf)

    w, V = np.linalg.eigh(sigmas)
    singular = _is_singular(w)
    ws = np.where(singular[:, None], 1.0, w)
    if kind == "A":
        out = np.sum(1.0 / ws, axis=-1) / p
    elif kind == "D":
        out = -np.mean(np.log(ws), axis=-1)
        if not log:
            out = np.exp(out)
    elif kind == "E":
        out = 1.0 / ws[:, 0]
    elif kind == "V":
        # tr(X S^-1 X^T) / n = sum_j (v_j^T X^T X v_j) / w_j / n
        proj = X @ V  # (m, n, p)
        out = np.sum(np.sum(proj**2, axis=-2) / ws, axis=-1) / X.shape[0]
    else:  # G
        proj = X @ V
        out = np.max(np.sum(proj**2 / ws[:, None, :], axis=-1), axis=-1)
    return np.where(singular, np.inf, out)


def evaluate(c: Criterion, sigma, X=None, log: bool = False) -> float:
    """Criterion value of one covariance, ``inf`` when singular."""
    sigma = sym(sigma)
    return float(evaluate_batch(c, sigma[None], X, log=log)[0])


def relaxation_value(c: Criterion, sigma, X=None) -> float:
    """The function minimized by the relaxation: ``log f`` for D, ``f`` otherwise."""
    return evaluate(c, sigma, X, log=c.log_mode)


def grad_sigma(c: Criterion, sigma, X=None) -> np.ndarray:
    """A subgradient of :func:`relaxation_value` with respect to the covariance.

    For D this is the gradient of ``-(1/p) log det``.  E and G use the lowest
    index among tied eigenvectors / rows.
    """
    X = _check_pool(c, X)
    S = sym(sigma)
    p = S.shape[0]
    if c.bayes:
        S = S + c.shift * np.eye(p)
    if c.kind == "T":
        tr = np.trace(S)
        if tr <= 0:
            raise SingularityError("zero-trace covariance")
        return -(p / tr**2) * np.eye(p)
    w, V = np.linalg.eigh(S)
    if _is_singular(w[None])[0]:
        raise SingularityError("singular covariance")
    if c.kind == "E":
        u = V[:, 0]
        return -np.outer(u, u) / w[0] ** 2
    inv = sym((V / w) @ V.T)
    if c.kind == "A":
        return -sym(inv @ inv) / p
    if c.kind == "D":
        return -inv / p
    if c.kind == "V":
        Y = X @ inv
        return -sym(Y.T @ Y) / X.shape[0]
    # G
    Y = X @ inv
    j = int(np.argmax(np.sum(Y * X, axis=1)))
    return -np.outer(Y[j], Y[j])


def value_and_grad(c: Criterion, sigma: np.ndarray, X=None):
    """:func:`relaxation_value` and :func:`grad_sigma` sharing one eigendecomposition.

    ``sigma`` is trusted to be symmetric and finite (internal fast path).
    Returns ``(inf, None)`` on a singular covariance.
    """
    p = sigma.shape[0]
    S = sigma + c.shift * np.eye(p) if c.bayes else sigma
    if c.kind == "T":
        tr = float(np.trace(S))
        if tr <= 0:
            return np.inf, None
        return p / tr, -(p / tr**2) * np.eye(p)
    w, V = np.linalg.eigh(S)
    if w[0] <= SINGULAR_RTOL * max(abs(w[-1]), _TINY):
        return np.inf, None
    if c.kind == "E":
        u = V[:, 0]
        return 1.0 / w[0], -np.outer(u, u) / w[0] ** 2
    if c.kind == "D":
        return -float(np.mean(np.log(w))), -(V / w) @ V.T / p
    if c.kind == "A":
        return float(np.sum(1.0 / w)) / p, -(V / w**2) @ V.T / p
    Y = X @ (V / np.sqrt(w))  # rows: S^{-1/2} x_i in the eigenbasis
    if c.kind == "V":
        Z = (X @ V) / w
        return float(np.sum(Y**2)) / X.shape[0], -(V @ (Z.T @ Z) @ V.T) / X.shape[0]
    lev = np.sum(Y**2, axis=1)
    j = int(np.argmax(lev))
    z = V @ ((V.T @ X[j]) / w)
    return float(lev[j]), -np.outer(z, z)


def lipschitz_constant(c: Criterion, stats: PoolStats, smoothing: float) -> float:
    """Lipschitz parameter of the smoothed objective in the l1 norm.

    For Bayesian criteria the guaranteed eigenvalue floor ``smoothing *
    sigma_lo`` is replaced by the prior shift, which makes the bound
    independent of ``smoothing``.
    """
    B2, p = stats.max_norm**2, stats.dim
    if c.bayes:
        floor = c.shift
    else:
        if stats.sigma_lo <= 0:
            raise InputError("pool covariance is singular: Lipschitz bound is unbounded")
        floor = smoothing * stats.sigma_lo
    kind = c.kind
    if kind == "A":
        return B2 / (floor**2 * p)
    if kind == "T":
        return B2 / floor
    if kind in ("E", "G"):
        return B2 / floor**2
    if kind == "V":
        return B2 * stats.sigma_hi / floor**2
    return B2 / (floor * p)  # D, log form


def regularity_params(c: Criterion, stats: PoolStats, smoothing: float, k: int, b: int):
    """Return ``(L, mu0, log_mode)`` for criterion ``c`` on a pool with ``stats``."""
    if not smoothing > 0:
        raise InputError("smoothing must be positive")
    L = lipschitz_constant(c, stats, smoothing)
    kb = k * b * stats.sigma_hi
    if c.kind == "V":
        mu0 = stats.sigma_lo / kb
    elif c.kind == "G":
        mu0 = stats.max_norm**2 / kb
    else:
        mu0 = 1.0 / kb
    return L, mu0, c.log_mode


def t_optimal_exact(X, k: int, b: int = 1) -> np.ndarray:
    """Exact T-optimal counts: fill the largest-norm points up to ``b`` each."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n == 0:
        raise InputError("empty design pool")
    if k > b * n:
        raise InputError(f"k={k} exceeds b*n={b * n}")
    order = np.argsort(-np.sum(X**2, axis=1), kind="stable")
    counts = np.zeros(n, dtype=int)
    left = k
    for i in order:
        if left == 0:
            break
        counts[i] = min(b, left)
        left -= counts[i]
    return counts
