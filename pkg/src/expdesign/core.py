"""Dense symmetric-matrix numerics shared by the rest of the package."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

# eigenvalues in [-NEG_TOL * lambda_max, 0) are rounding noise from sums of outer products
NEG_TOL = 1e-10


class InputError(ValueError):
    """Malformed or out-of-domain input."""


class SingularityError(ArithmeticError):
    """A negative matrix power was requested on a singular matrix."""


class InfeasibleError(ValueError):
    """The constraint set is empty for the requested parameters."""


class ConfigurationError(ValueError):
    """A theoretical precondition on the run parameters does not hold."""


class EigenDecomp(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns

    def power(self, q: float, floor: float = 0.0) -> np.ndarray:
        return _power_from_eig(self, q, floor)

    def reconstruct(self) -> np.ndarray:
        V, w = self.eigenvectors, self.eigenvalues
        return sym((V * w) @ V.T)


def sym(M) -> np.ndarray:
    """Symmetrize ``M`` as ``(M + M.T) / 2``; raises on non-finite or non-square input."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError("matrix has non-finite entries")
    return 0.5 * (M + M.T)


def sym_eig(S) -> EigenDecomp:
    S = sym(S)
    w, V = np.linalg.eigh(S)
    return EigenDecomp(w, V)


def _clip_eigenvalues(w: np.ndarray) -> np.ndarray:
    top = max(float(np.max(np.abs(w))), 0.0) if w.size else 0.0
    if w.size and w[0] < -NEG_TOL * top:
        raise InputError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    return np.maximum(w, 0.0)


def _power_from_eig(eig: EigenDecomp, q: float, floor: float) -> np.ndarray:
    w = np.maximum(_clip_eigenvalues(eig.eigenvalues), floor)
    if q < 0 and np.any(w <= 0):
        raise SingularityError("negative power of a singular matrix")
    V = eig.eigenvectors
    return sym((V * w**q) @ V.T)


def psd_power(S, q: float, floor: float = 0.0) -> np.ndarray:
    """Return ``S**q`` for PSD ``S`` with eigenvalues clipped below at ``floor``.

    Parameters
    ----------
    S : array_like (p, p)
        Symmetric positive semi-definite matrix.
    q : float
        Exponent; negative powers require a nonsingular clipped spectrum.
    floor : float
        Lower clip applied to the eigenvalues before exponentiation.
    """
    return _power_from_eig(sym_eig(S), q, floor)


def lambda_min(S) -> float:
    return float(sym_eig(S).eigenvalues[0])


def inner(A, B) -> float:
    """Frobenius inner product ``tr(A^T B)``."""
    return float(np.sum(np.asarray(A) * np.asarray(B)))


def weighted_gram(X: np.ndarray, weights) -> np.ndarray:
    """``sum_i weights[i] * x_i x_i^T`` for the rows of ``X``."""
    weights = np.asarray(weights, dtype=float)
    return sym((X.T * weights) @ X)
