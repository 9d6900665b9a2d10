"""Low-rank double transformation matrix classification.

LatLRR splits a data matrix into principal features XZ, salient features LX
and sparse noise E; two ridge-regularized maps regress both feature blocks
onto one-hot labels, and test samples are classified by nearest neighbour in
the learned space.
"""

from .dtml import DtmlModel, FitOptions, Mode, dtml_fit, fit_ablation, joint_closed_form
from .errors import DataError, InconsistentProjectionError, NumericalError
from .latlrr import LatLrrModel, SolverOptions, latlrr_fit, lrr_fit
from .linalg import norms, pseudo_inverse, soft_threshold, svd, svt
from .pipeline import TrainParams, TrainedModel, embed, load_model, predict, save_model, train
from .projector import ProjectionMatrix, fit_projection, project

__all__ = [
    "DataError", "DtmlModel", "FitOptions", "InconsistentProjectionError", "LatLrrModel", "Mode",
    "NumericalError", "ProjectionMatrix", "SolverOptions", "TrainParams", "TrainedModel",
    "dtml_fit", "embed", "fit_ablation", "fit_projection", "joint_closed_form", "latlrr_fit",
    "load_model", "lrr_fit", "norms", "predict", "project", "pseudo_inverse", "save_model",
    "soft_threshold", "svd", "svt", "train",
]
