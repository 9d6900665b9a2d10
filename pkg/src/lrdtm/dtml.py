"""Double transformation matrix learning.

Given principal features A = XZ, salient features B = LX and one-hot
labels Y, find W1, W2 minimizing

    1/2 ||Y - W1 A - W2 B||_F^2 + lambda3/2 ||W1||_F^2 + lambda4/2 ||W2||_F^2

by exact block-coordinate updates. The two ridge Gram inverses do not
depend on W1, W2 and are formed once before the loop.
"""

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import NumericalError
from .linalg import as_matrix, ridge_gram_inverse


class Mode(str, enum.Enum):
    FULL = "full"
    SALIENT_ONLY = "salient"
    SHARED_SINGLE = "shared"


@dataclass(frozen=True)
class FitOptions:
    """Stopping rule for the alternating updates.

    A sweep is accepted as converged when the relative objective change
    drops below `tol`. When `step_tol` is set, the relative change of the
    stacked iterate ``[W1, W2]`` must also drop below it.
    """

    tol: float = 1e-6
    max_iter: int = 100
    step_tol: float | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.step_tol is not None and not self.step_tol > 0:
            raise ValueError("step_tol must be > 0")


@dataclass(frozen=True)
class DtmlModel:
    w1: np.ndarray
    w2: np.ndarray
    lambda3: float
    lambda4: float
    mode: Mode = Mode.FULL
    objective_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def sweeps(self) -> int:
        return max(len(self.objective_trace) - 1, 0)

    def transform(self, a, b) -> np.ndarray:
        return self.w1 @ a + self.w2 @ b


def _check_inputs(a, b, y, **penalties):
    a, b, y = as_matrix(a), as_matrix(b), as_matrix(y)
    if a.shape != b.shape:
        raise ValueError(f"feature blocks differ in shape: {a.shape} vs {b.shape}")
    if y.shape[1] != a.shape[1]:
        raise ValueError(f"labels have {y.shape[1]} columns, features have {a.shape[1]}")
    for name, value in penalties.items():
        if not value > 0:
            raise ValueError(f"{name} must be > 0, got {value}")
    return a, b, y


def objective(w1, w2, a, b, y, lambda3: float, lambda4: float) -> float:
    r = y - w1 @ a - w2 @ b
    return 0.5 * (np.vdot(r, r) + lambda3 * np.vdot(w1, w1) + lambda4 * np.vdot(w2, w2))


def dtml_fit(a, b, y, lambda3: float, lambda4: float, opts: FitOptions | None = None,
             callback=None, precompute: bool = True) -> DtmlModel:
    """Learn W1, W2 by alternating closed-form ridge updates.

    Parameters
    ----------
    a, b : array, shape (m, n)
        Principal and salient features of the training samples.
    y : array, shape (c, n)
        One-hot label matrix.
    lambda3, lambda4 : float
        Ridge penalties on W1 and W2.
    opts : FitOptions, optional
    callback : callable, optional
        Called as ``callback(sweep, w1, w2, objective)`` after every sweep.
    precompute : bool
        Form the Gram inverses once (default). With False they are rebuilt
        every sweep, which gives identical iterates at a higher cost.

    Returns
    -------
    DtmlModel
        ``objective_trace[0]`` is the value at W1 = W2 = 0, followed by one
        entry per completed sweep.
    """
    opts = opts or FitOptions()
    a, b, y = _check_inputs(a, b, y, lambda3=lambda3, lambda4=lambda4)
    c, m = y.shape[0], a.shape[0]

    w1 = np.zeros((c, m))
    w2 = np.zeros((c, m))
    ya, yb = y @ a.T, y @ b.T
    ba, ab = b @ a.T, a @ b.T
    if precompute:
        t1 = ridge_gram_inverse(a, lambda3)
        t2 = ridge_gram_inverse(b, lambda4)

    trace = [objective(w1, w2, a, b, y, lambda3, lambda4)]
    converged = False
    for sweep in range(1, opts.max_iter + 1):
        if not precompute:
            t1 = ridge_gram_inverse(a, lambda3)
            t2 = ridge_gram_inverse(b, lambda4)
        w1_prev, w2_prev = w1, w2
        w1 = (ya - w2 @ ba) @ t1
        w2 = (yb - w1 @ ab) @ t2
        obj = objective(w1, w2, a, b, y, lambda3, lambda4)
        trace.append(obj)
        if callback is not None:
            callback(sweep, w1, w2, obj)
        if not np.isfinite(obj):
            raise NumericalError(f"objective became non-finite at sweep {sweep}")

        prev = trace[-2]
        done = abs(obj - prev) / max(prev, 1e-12) < opts.tol
        if done and opts.step_tol is not None:
            step = np.sqrt(np.vdot(w1 - w1_prev, w1 - w1_prev) + np.vdot(w2 - w2_prev, w2 - w2_prev))
            size = np.sqrt(np.vdot(w1, w1) + np.vdot(w2, w2))
            done = step <= opts.step_tol * max(size, 1e-12)
        if done:
            converged = True
            break

    return DtmlModel(w1=w1, w2=w2, lambda3=float(lambda3), lambda4=float(lambda4),
                     mode=Mode.FULL, objective_trace=trace, converged=converged)


def joint_closed_form(a, b, y, lambda3: float, lambda4: float):
    """Global minimizer of the two-matrix ridge problem as one linear system.

    Stacks M = [A; B] and solves ``[W1 W2] (M M^T + diag(lambda3 I, lambda4 I)) = Y M^T``.
    Returns the pair ``(w1, w2)``.
    """
    a, b, y = _check_inputs(a, b, y, lambda3=lambda3, lambda4=lambda4)
    m = a.shape[0]
    stacked = np.vstack([a, b])
    gram = stacked @ stacked.T
    gram[np.diag_indices(2 * m)] += np.concatenate([np.full(m, lambda3), np.full(m, lambda4)])
    try:
        # gram is symmetric, so W gram = Y M^T  <=>  gram W^T = M Y^T
        w = sla.cho_solve(sla.cho_factor(gram), stacked @ y.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"joint normal equations could not be solved: {exc}") from exc
    return w[:, :m], w[:, m:]


def _ridge(f, y, lam):
    return (y @ f.T) @ ridge_gram_inverse(f, lam)


def fit_ablation(mode, a, b, y, lam: float) -> DtmlModel:
    """Single-matrix variants used to isolate the effect of the second matrix.

    ``SALIENT_ONLY`` regresses Y on B alone (W1 = 0). ``SHARED_SINGLE`` regresses
    Y on A + B with one matrix, stored in both slots so ``W1 A + W2 B = W (A + B)``.
    The trace holds the two-matrix objective at zero and at the stored pair,
    with both penalties equal to `lam`.
    """
    mode = Mode(mode)
    a, b, y = _check_inputs(a, b, y, lam=lam)
    if mode is Mode.SALIENT_ONLY:
        w2 = _ridge(b, y, lam)
        w1 = np.zeros_like(w2)
    elif mode is Mode.SHARED_SINGLE:
        w1 = _ridge(a + b, y, lam)
        w2 = w1.copy()
    else:
        raise ValueError(f"{mode} is not an ablation mode")
    trace = [objective(np.zeros_like(w1), np.zeros_like(w2), a, b, y, lam, lam),
             objective(w1, w2, a, b, y, lam, lam)]
    return DtmlModel(w1=w1, w2=w2, lambda3=float(lam), lambda4=float(lam), mode=mode,
                     objective_trace=trace, converged=True)
