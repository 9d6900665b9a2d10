"""Latent low-rank representation by inexact augmented Lagrangian.

Solves

    min ||Z||_* + lambda1 ||L||_* + lambda2 ||E||_1   s.t.  X = XZ + LX + E

with auxiliary copies J = Z and S = L so that every sub-step is either a
proximal map (SVT, soft threshold) or a linear solve against a matrix that
is factorized once. Plain LRR with dictionary D is provided as a baseline.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import NumericalError
from .linalg import as_matrix, nuclear_norm, soft_threshold, svt


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-6
    max_iter: int = 500
    mu0: float = 1e-2
    rho: float = 1.1
    mu_max: float = 1e10

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.rho > 1:
            raise ValueError("rho must be > 1")
        if not 0 < self.mu0 < self.mu_max:
            raise ValueError("need 0 < mu0 < mu_max")


@dataclass(frozen=True)
class IterRecord:
    iteration: int
    constraint_residual: float
    mu: float


@dataclass(frozen=True)
class LatLrrModel:
    z: np.ndarray
    l: np.ndarray
    e: np.ndarray
    lambda1: float
    lambda2: float
    history: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def residual(self) -> float:
        return self.history[-1].constraint_residual if self.history else 0.0

    def objective(self) -> float:
        return (nuclear_norm(self.z) + self.lambda1 * nuclear_norm(self.l)
                + self.lambda2 * float(np.abs(self.e).sum()))


@dataclass(frozen=True)
class LrrResult:
    z: np.ndarray
    e: np.ndarray
    lam: float
    history: list = field(default_factory=list)
    converged: bool = False


def _cho(a):
    try:
        return sla.cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization failed: {exc}") from exc


def _check_penalty(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")


def latlrr_fit(x, lambda1: float = 1.0, lambda2: float = 0.1,
               opts: SolverOptions | None = None) -> LatLrrModel:
    """Decompose ``x`` into principal (XZ), salient (LX) and sparse (E) parts.

    Parameters
    ----------
    x : array, shape (m, n)
        Data matrix, one sample per column.
    lambda1, lambda2 : float
        Weights on ``||L||_*`` and ``||E||_1``.
    opts : SolverOptions, optional

    Returns
    -------
    LatLrrModel
        ``converged`` is False when `max_iter` ran out before the relative
        constraint residual dropped below ``opts.tol``; the caller decides
        what to do with such a model.
    """
    opts = opts or SolverOptions()
    x = as_matrix(x)
    if x.size == 0:
        raise ValueError("x must be non-empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains NaN or Inf")
    _check_penalty("lambda1", lambda1)
    _check_penalty("lambda2", lambda2)

    m, n = x.shape
    z = np.zeros((n, n))
    j = np.zeros((n, n))
    l = np.zeros((m, m))
    s = np.zeros((m, m))
    e = np.zeros((m, n))
    y1 = np.zeros((m, n))
    y2 = np.zeros((n, n))
    y3 = np.zeros((m, m))

    xtx = _cho(x.T @ x + np.eye(n))
    xxt = _cho(x @ x.T + np.eye(m))
    scale = max(np.linalg.norm(x), 1.0)
    mu = opts.mu0
    history = []
    converged = False

    for it in range(1, opts.max_iter + 1):
        j = svt(z + y2 / mu, 1.0 / mu)
        s = svt(l + y3 / mu, lambda1 / mu)
        z = sla.cho_solve(xtx, x.T @ (x - l @ x - e + y1 / mu) + j - y2 / mu)
        # L (XX^T + I) = (X - XZ - E + Y1/mu) X^T + S - Y3/mu
        rhs = (x - x @ z - e + y1 / mu) @ x.T + s - y3 / mu
        l = sla.cho_solve(xxt, rhs.T).T
        e = soft_threshold(x - x @ z - l @ x + y1 / mu, lambda2 / mu)

        r1 = x - x @ z - l @ x - e
        r2 = z - j
        r3 = l - s
        res = max(np.linalg.norm(r1), np.linalg.norm(r2), np.linalg.norm(r3)) / scale
        history.append(IterRecord(it, float(res), float(mu)))
        if not np.isfinite(res):
            raise NumericalError(f"LatLRR diverged at iteration {it}")
        if res <= opts.tol:
            converged = True
            break
        y1 += mu * r1
        y2 += mu * r2
        y3 += mu * r3
        mu = min(mu * opts.rho, opts.mu_max)

    return LatLrrModel(z=z, l=l, e=e, lambda1=float(lambda1), lambda2=float(lambda2),
                       history=history, converged=converged)


def lrr_fit(x, d=None, lam: float = 0.1, opts: SolverOptions | None = None) -> LrrResult:
    """Low-rank representation ``min ||Z||_* + lam ||E||_1 s.t. X = DZ + E``.

    The dictionary defaults to the data itself.
    """
    opts = opts or SolverOptions()
    x = as_matrix(x)
    d = x if d is None else as_matrix(d)
    if d.shape[0] != x.shape[0]:
        raise ValueError(f"dictionary has {d.shape[0]} rows, data has {x.shape[0]}")
    _check_penalty("lambda", lam)

    m, n = x.shape
    k = d.shape[1]
    z = np.zeros((k, n))
    j = np.zeros((k, n))
    e = np.zeros((m, n))
    y1 = np.zeros((m, n))
    y2 = np.zeros((k, n))
    dtd = _cho(d.T @ d + np.eye(k))
    scale = max(np.linalg.norm(x), 1.0)
    mu = opts.mu0
    history = []
    converged = False

    for it in range(1, opts.max_iter + 1):
        j = svt(z + y2 / mu, 1.0 / mu)
        z = sla.cho_solve(dtd, d.T @ (x - e + y1 / mu) + j - y2 / mu)
        e = soft_threshold(x - d @ z + y1 / mu, lam / mu)
        r1 = x - d @ z - e
        r2 = z - j
        res = max(np.linalg.norm(r1), np.linalg.norm(r2)) / scale
        history.append(IterRecord(it, float(res), float(mu)))
        if res <= opts.tol:
            converged = True
            break
        y1 += mu * r1
        y2 += mu * r2
        mu = min(mu * opts.rho, opts.mu_max)

    return LrrResult(z=z, e=e, lam=float(lam), history=history, converged=converged)


def principal_features(model: LatLrrModel, x) -> np.ndarray:
    x = as_matrix(x)
    if x.shape[1] != model.z.shape[0]:
        raise ValueError(f"x has {x.shape[1]} columns, Z is {model.z.shape}")
    return x @ model.z


def salient_features(model: LatLrrModel, x) -> np.ndarray:
    x = as_matrix(x)
    if x.shape[0] != model.l.shape[1]:
        raise ValueError(f"x has {x.shape[0]} rows, L is {model.l.shape}")
    return model.l @ x
