"""Low-rank projection carrying raw samples into principal-feature space."""

from dataclasses import dataclass

import numpy as np

from .errors import InconsistentProjectionError
from .linalg import as_matrix, pseudo_inverse

CONSISTENCY_TOL = 1e-6


@dataclass(frozen=True)
class ProjectionMatrix:
    p: np.ndarray
    fit_residual: float

    @property
    def consistent(self) -> bool:
        return self.fit_residual <= CONSISTENCY_TOL


def fit_projection(x, xz, rank_tol: float | None = None, strict: bool = True) -> ProjectionMatrix:
    """Minimal nuclear-norm P with ``P X = XZ``, via ``P = XZ X^+``.

    When the constraint is solvable this is its minimal nuclear-norm solution.
    When it is not (``XZ`` has rows outside the row space of ``X``, which
    happens once a sparse part is split off and X has fewer rows than
    columns), ``XZ X^+`` is the least-squares fit of smallest norm.

    Parameters
    ----------
    x, xz : array, shape (m, n)
    rank_tol : float, optional
        Singular value cutoff for the pseudo-inverse of ``x``.
    strict : bool
        Raise ``InconsistentProjectionError`` when the relative residual
        ``||PX - XZ||_F / max(||XZ||_F, 1)`` exceeds 1e-6. With False the
        least-squares P is returned and the residual is only recorded.
    """
    x, xz = as_matrix(x), as_matrix(xz)
    if x.shape != xz.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs xz {xz.shape}")
    p = xz @ pseudo_inverse(x, rank_tol)
    residual = float(np.linalg.norm(p @ x - xz) / max(np.linalg.norm(xz), 1.0))
    if strict and residual > CONSISTENCY_TOL:
        raise InconsistentProjectionError(residual, CONSISTENCY_TOL)
    return ProjectionMatrix(p, residual)


def project(pm: ProjectionMatrix, samples) -> np.ndarray:
    samples = as_matrix(samples)
    if samples.shape[0] != pm.p.shape[1]:
        raise ValueError(f"samples have {samples.shape[0]} rows, P is {pm.p.shape}")
    return pm.p @ samples
