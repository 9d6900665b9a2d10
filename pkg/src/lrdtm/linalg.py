"""Dense linear-algebra kernels and proximal operators.

All matrices are 2-D ``float64`` numpy arrays. Samples are stored as columns
throughout the package; file I/O transposes explicitly (see ``datakit``).
The SVD backend is LAPACK's divide-and-conquer routine through
``numpy.linalg.svd``; nothing here uses randomized factorizations.
"""

from typing import NamedTuple

import numpy as np
from scipy import linalg as sla

from .errors import NumericalError


class SvdFactors(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


class Norms(NamedTuple):
    frobenius: float
    nuclear: float
    l1: float
    linf: float


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def svd(a) -> SvdFactors:
    """Thin SVD with singular values in non-increasing order.

    Raises
    ------
    NumericalError
        If LAPACK fails to converge or the input is empty / non-finite.
    """
    a = as_matrix(a)
    if a.size == 0:
        raise ValueError("svd of an empty matrix")
    if not np.all(np.isfinite(a)):
        raise NumericalError("svd input contains NaN or Inf")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return SvdFactors(u, s, vt)


def svt(a, tau: float) -> np.ndarray:
    """Singular value thresholding, the proximal map of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    a = as_matrix(a)
    if a.size == 0:
        return a.copy()
    u, s, vt = svd(a)
    keep = s > tau
    if not keep.any():
        return np.zeros_like(a)
    return (u[:, keep] * (s[keep] - tau)) @ vt[keep]


def soft_threshold(a, tau: float) -> np.ndarray:
    """Elementwise shrinkage ``sign(a) * max(|a| - tau, 0)``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    a = np.asarray(a, dtype=np.float64)
    return np.sign(a) * np.maximum(np.abs(a) - tau, 0.0)


def default_rank_tol(shape, smax: float) -> float:
    return max(shape) * np.finfo(np.float64).eps * smax


def pseudo_inverse(a, rank_tol: float | None = None) -> np.ndarray:
    """Moore-Penrose inverse via SVD.

    Singular values at or below `rank_tol` are treated as zero. The default
    tolerance is ``max(rows, cols) * eps * sigma_max``.
    """
    a = as_matrix(a)
    if a.size == 0:
        return np.zeros(a.shape[::-1])
    u, s, vt = svd(a)
    if rank_tol is None:
        rank_tol = default_rank_tol(a.shape, s[0] if s.size else 0.0)
    if rank_tol < 0:
        raise ValueError("rank_tol must be non-negative")
    keep = s > rank_tol
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def ridge_gram_inverse(f, lam: float) -> np.ndarray:
    """Return ``(F F^T + lam I)^{-1}`` via a Cholesky factorization."""
    if not lam > 0:
        raise ValueError("ridge penalty must be > 0")
    f = as_matrix(f)
    m = f.shape[0]
    gram = f @ f.T
    gram[np.diag_indices(m)] += lam
    try:
        factor = sla.cho_factor(gram, lower=True, check_finite=True)
        inv = sla.cho_solve(factor, np.eye(m))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Cholesky factorization failed: {exc}") from exc
    return 0.5 * (inv + inv.T)


def nuclear_norm(a) -> float:
    a = as_matrix(a)
    if a.size == 0:
        return 0.0
    return float(np.sum(svd(a).s))


def norms(a) -> Norms:
    """Frobenius, nuclear, entrywise l1 and entrywise max-abs norms."""
    a = as_matrix(a)
    if a.size == 0:
        return Norms(0.0, 0.0, 0.0, 0.0)
    return Norms(
        frobenius=float(np.linalg.norm(a)),
        nuclear=nuclear_norm(a),
        l1=float(np.abs(a).sum()),
        linf=float(np.abs(a).max()),
    )
