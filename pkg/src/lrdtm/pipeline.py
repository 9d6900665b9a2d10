"""Training and prediction: LatLRR features -> two ridge maps -> nearest neighbour."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .datakit import normalize_columns
from .dtml import DtmlModel, FitOptions, Mode, dtml_fit, fit_ablation
from .errors import DataError
from .latlrr import IterRecord, LatLrrModel, SolverOptions, latlrr_fit
from .linalg import as_matrix
from .projector import ProjectionMatrix, fit_projection, project

NN_TARGETS = ("gallery", "labels")


@dataclass(frozen=True)
class LabelCodebook:
    """Maps external integer class ids onto 0..c-1 in ascending id order."""

    classes: np.ndarray

    def __post_init__(self):
        classes = np.asarray(self.classes, dtype=np.int64)
        if classes.ndim != 1 or np.unique(classes).size != classes.size:
            raise ValueError("class ids must be a 1-D array of distinct integers")
        if classes.size < 2:
            raise DataError(f"need at least 2 classes, got {classes.size}")
        object.__setattr__(self, "classes", np.sort(classes))

    @classmethod
    def from_labels(cls, labels) -> "LabelCodebook":
        return cls(np.unique(np.asarray(labels)))

    @property
    def n_classes(self) -> int:
        return self.classes.size

    def encode(self, labels) -> np.ndarray:
        labels = np.asarray(labels)
        idx = np.searchsorted(self.classes, labels)
        idx = np.clip(idx, 0, self.n_classes - 1)
        if not np.all(self.classes[idx] == labels):
            unknown = sorted(set(labels.tolist()) - set(self.classes.tolist()))
            raise DataError(f"labels not in codebook: {unknown}")
        return idx

    def decode(self, idx) -> np.ndarray:
        return self.classes[np.asarray(idx)]


def one_hot(labels, c: int) -> np.ndarray:
    """c x n binary matrix with a single 1 per column at the sample's class."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    y = np.zeros((c, labels.size))
    y[labels, np.arange(labels.size)] = 1.0
    return y


@dataclass(frozen=True)
class TrainParams:
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 1.0
    lambda4: float = 0.01
    mode: Mode = Mode.FULL
    ablation_lambda: float | None = None
    nn_target: str = "gallery"
    normalize: bool = True
    projection_rtol: float | None = 1e-2
    solver: SolverOptions = field(default_factory=SolverOptions)
    fit: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.ablation_lambda is not None and not self.ablation_lambda > 0:
            raise ValueError("ablation_lambda must be > 0")
        if self.projection_rtol is not None and not 0 <= self.projection_rtol < 1:
            raise ValueError("projection_rtol must be in [0, 1)")
        if self.nn_target not in NN_TARGETS:
            raise ValueError(f"nn_target must be one of {NN_TARGETS}")

    @property
    def single_lambda(self) -> float:
        return self.lambda4 if self.ablation_lambda is None else self.ablation_lambda

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainParams":
        d = dict(d)
        d["solver"] = SolverOptions(**d.get("solver", {}))
        d["fit"] = FitOptions(**d.get("fit", {}))
        return cls(**d)


@dataclass(frozen=True)
class TrainedModel:
    latlrr: LatLrrModel
    dtml: DtmlModel
    projection: ProjectionMatrix
    codebook: LabelCodebook
    gallery: np.ndarray
    gallery_labels: np.ndarray
    params: TrainParams

    @property
    def n_features(self) -> int:
        return self.latlrr.l.shape[0]


def train(x, labels, params: TrainParams | None = None, callback=None,
          latlrr: LatLrrModel | None = None) -> TrainedModel:
    """Fit the full model on training samples (columns of `x`).

    `callback` is forwarded to ``dtml_fit`` in full mode and receives
    ``(sweep, w1, w2, objective)``. A decomposition already fitted to the
    (normalized) training matrix can be passed as `latlrr` to skip that step.
    """
    params = params or TrainParams()
    x = as_matrix(x)
    labels = np.asarray(labels)
    if labels.shape != (x.shape[1],):
        raise DataError(f"{labels.size} labels for {x.shape[1]} samples")
    codebook = LabelCodebook.from_labels(labels)
    idx = codebook.encode(labels)
    y = one_hot(idx, codebook.n_classes)

    xs = normalize_columns(x) if params.normalize else x
    if latlrr is None:
        lat = latlrr_fit(xs, params.lambda1, params.lambda2, params.solver)
    elif latlrr.z.shape[0] != xs.shape[1] or latlrr.l.shape[0] != xs.shape[0]:
        raise ValueError("precomputed decomposition does not match the training data")
    else:
        lat = latlrr
    xz = xs @ lat.z
    lx = lat.l @ xs
    if params.mode is Mode.FULL:
        dt = dtml_fit(xz, lx, y, params.lambda3, params.lambda4, params.fit, callback=callback)
    else:
        dt = fit_ablation(params.mode, xz, lx, y, params.single_lambda)
    proj = fit_model_projection(xs, xz, params.projection_rtol)
    gallery = dt.w1 @ xz + dt.w2 @ lx
    return TrainedModel(lat, dt, proj, codebook, gallery, idx, params)


def fit_model_projection(xs, xz, rtol: float | None) -> ProjectionMatrix:
    """P for the model: ``XZ X^+`` with singular values of X below ``rtol * sigma_max`` dropped.

    With few samples X is close to square and its smallest singular values
    are tiny, so the exact minimal-norm P amplifies test noise badly. The
    truncated P trades an exact fit of ``PX = XZ`` for stability; the residual
    is kept on the returned matrix. ``rtol=None`` gives the exact solution.
    """
    cutoff = None if rtol is None else rtol * float(np.linalg.norm(xs, 2))
    return fit_projection(xs, xz, rank_tol=cutoff, strict=False)


def embed(model: TrainedModel, samples) -> np.ndarray:
    """``W1 P x + W2 L x`` for every column x of `samples`."""
    samples = as_matrix(samples)
    if samples.shape[0] != model.n_features:
        raise ValueError(f"samples have {samples.shape[0]} features, model expects {model.n_features}")
    if model.params.normalize:
        samples = normalize_columns(samples)
    return model.dtml.w1 @ project(model.projection, samples) + model.dtml.w2 @ (model.latlrr.l @ samples)


def nearest_neighbor(reference, reference_labels, queries) -> np.ndarray:
    """Label of the Euclidean-nearest reference column; ties go to the lowest index."""
    d = cdist(queries.T, reference.T, "sqeuclidean")
    return np.asarray(reference_labels)[np.argmin(d, axis=1)]


def classify_embeddings(model: TrainedModel, emb, nn_target: str | None = None) -> np.ndarray:
    target = nn_target or model.params.nn_target
    if target == "gallery":
        return nearest_neighbor(model.gallery, model.gallery_labels, emb)
    if target == "labels":
        c = model.codebook.n_classes
        return nearest_neighbor(np.eye(c), np.arange(c), emb)
    raise ValueError(f"unknown nn_target {target!r}")


def predict(model: TrainedModel, samples, nn_target: str | None = None) -> np.ndarray:
    """Codebook indices (0..c-1) of the predicted classes."""
    return classify_embeddings(model, embed(model, samples), nn_target)


def save_model(model: TrainedModel, path) -> None:
    lat, dt = model.latlrr, model.dtml
    meta = {
        "params": model.params.to_dict(),
        "latlrr": {"lambda1": lat.lambda1, "lambda2": lat.lambda2, "converged": lat.converged,
                   "history": [asdict(h) for h in lat.history]},
        "dtml": {"lambda3": dt.lambda3, "lambda4": dt.lambda4, "mode": dt.mode.value,
                 "objective_trace": dt.objective_trace, "converged": dt.converged},
        "fit_residual": model.projection.fit_residual,
    }
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh, z=lat.z, l=lat.l, e=lat.e, w1=dt.w1, w2=dt.w2, p=model.projection.p,
            classes=model.codebook.classes, gallery=model.gallery,
            gallery_labels=model.gallery_labels, meta=np.array(json.dumps(meta)),
        )


def load_model(path) -> TrainedModel:
    with np.load(path, allow_pickle=False) as f:
        meta = json.loads(str(f["meta"]))
        lm, dm = meta["latlrr"], meta["dtml"]
        lat = LatLrrModel(f["z"], f["l"], f["e"], lm["lambda1"], lm["lambda2"],
                          [IterRecord(**h) for h in lm["history"]], lm["converged"])
        dt = DtmlModel(f["w1"], f["w2"], dm["lambda3"], dm["lambda4"], Mode(dm["mode"]),
                       dm["objective_trace"], dm["converged"])
        proj = ProjectionMatrix(f["p"], meta["fit_residual"])
        return TrainedModel(lat, dt, proj, LabelCodebook(f["classes"]), f["gallery"],
                            f["gallery_labels"], TrainParams.from_dict(meta["params"]))
