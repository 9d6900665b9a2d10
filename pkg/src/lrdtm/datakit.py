"""Datasets, seeded splits, synthetic data and small I/O helpers.

Layout conventions
------------------
In memory a data matrix is ``m x n`` with one sample per column. On disk a
matrix CSV holds one sample per row (comma separated, optional header row),
so loading and saving transpose. Floats are written with 17 significant
digits, which round-trips float64 exactly.

Image vectors are the row-major (C order) flattening of an ``h x w`` image.

Randomness
----------
Every random draw goes through ``make_rng``, a numpy ``Generator`` over the
Philox 4x64 counter-based bit generator, so a given seed yields the same
stream on every platform and numpy release that ships Philox.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    labels: np.ndarray
    image_shape: tuple | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        labels = np.asarray(self.labels)
        if x.ndim != 2:
            raise DataError(f"data matrix must be 2-D, got shape {x.shape}")
        if labels.ndim != 1 or labels.shape[0] != x.shape[1]:
            raise DataError(f"{labels.size} labels for {x.shape[1]} samples")
        if not np.issubdtype(labels.dtype, np.integer):
            raise DataError("labels must be integers")
        if self.image_shape is not None:
            h, w = self.image_shape
            if h * w != x.shape[0]:
                raise DataError(f"image shape {h}x{w} does not match {x.shape[0]} features")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n_samples(self) -> int:
        return self.x.shape[1]

    @property
    def n_features(self) -> int:
        return self.x.shape[0]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[:, idx], self.labels[idx], self.image_shape)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_matrix_csv(path) -> np.ndarray:
    """Read a CSV with one sample per row; returns features x samples."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not t.strip() for t in row):
                continue
            if lineno == 1 and not all(_is_number(t) for t in row):
                continue  # header
            try:
                values = [float(t) for t in row]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(values)}")
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}:{lineno}: non-finite entry")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64).T


def read_labels_csv(path) -> np.ndarray:
    labels = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            token = row[0].strip()
            if len(row) > 1:
                raise DataError(f"{path}:{lineno}: labels file must have one column")
            try:
                labels.append(int(token))
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise DataError(f"{path}:{lineno}: not an integer label: {token!r}") from None
    return np.array(labels, dtype=np.int64)


def write_matrix_csv(x, path) -> None:
    x = np.asarray(x, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for sample in x.T:
            writer.writerow([format(v, ".17g") for v in sample])


def write_labels_csv(labels, path) -> None:
    with open(path, "w") as fh:
        for label in labels:
            fh.write(f"{int(label)}\n")


def load_dataset(matrix_path, labels_path, image_shape=None) -> Dataset:
    """Load a sample-per-row matrix CSV and a one-column integer label CSV."""
    x = read_matrix_csv(matrix_path)
    labels = read_labels_csv(labels_path)
    if labels.size != x.shape[1]:
        raise DataError(f"{matrix_path} has {x.shape[1]} samples but "
                        f"{labels_path} has {labels.size} labels")
    return Dataset(x, labels, tuple(image_shape) if image_shape else None)


def save_dataset(dataset: Dataset, matrix_path, labels_path) -> None:
    write_matrix_csv(dataset.x, matrix_path)
    write_labels_csv(dataset.labels, labels_path)


def normalize_columns(x) -> np.ndarray:
    """Scale every nonzero column to unit Euclidean norm."""
    x = np.asarray(x, dtype=np.float64)
    # pre-scale by the max entry so tiny columns do not underflow in the squares
    scale = np.abs(x).max(axis=0, initial=0.0)
    scale[scale == 0] = 1.0
    y = x / scale
    norms = np.linalg.norm(y, axis=0)
    norms[norms == 0] = 1.0
    return y / norms


@dataclass(frozen=True)
class SplitSpec:
    train_per_class: int
    seed: int = 0

    def __post_init__(self):
        if self.train_per_class < 1:
            raise ValueError("train_per_class must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


def stratified_split(labels, spec: SplitSpec):
    """Draw exactly ``spec.train_per_class`` training indices from every class.

    Classes are visited in ascending order and each is shuffled with one
    shared Philox stream seeded by ``spec.seed``. Returns sorted
    ``(train_idx, test_idx)``.
    """
    labels = np.asarray(labels)
    rng = make_rng(spec.seed)
    train = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < spec.train_per_class + 1:
            raise DataError(f"class {cls} has {members.size} samples; need at least "
                            f"{spec.train_per_class + 1} for a train/test split")
        train.append(rng.permutation(members)[: spec.train_per_class])
    train_idx = np.sort(np.concatenate(train))
    test_mask = np.ones(labels.size, dtype=bool)
    test_mask[train_idx] = False
    return train_idx, np.flatnonzero(test_mask)


@dataclass(frozen=True)
class SynthTruth:
    bases: list
    clean: np.ndarray
    spike_mask: np.ndarray


def synth_subspace_dataset(classes: int = 5, subspace_dim: int = 10, ambient_dim: int = 50,
                           per_class: int = 20, noise_fraction: float = 0.05,
                           spike_magnitude: float = 0.5, spread: float = 0.5, seed: int = 0,
                           return_truth: bool = False):
    """Union-of-subspaces data with sparse spike corruption.

    Each class draws an orthonormal basis of a random `subspace_dim`-dim
    subspace and a Gaussian center in coefficient space; sample coefficients
    are the center plus Gaussian scatter of relative size `spread`, scaled so
    clean columns have roughly unit norm. Each entry is then independently
    hit, with probability `noise_fraction`, by a spike of size
    `spike_magnitude` and random sign.
    """
    if classes < 1 or per_class < 1:
        raise ValueError("classes and per_class must be >= 1")
    if not 1 <= subspace_dim < ambient_dim:
        raise ValueError("need 1 <= subspace_dim < ambient_dim")
    if not 0 <= noise_fraction < 1:
        raise ValueError("noise_fraction must be in [0, 1)")
    if spike_magnitude < 0 or spread < 0:
        raise ValueError("spike_magnitude and spread must be >= 0")

    rng = make_rng(seed)
    bases, blocks = [], []
    for _ in range(classes):
        basis, _ = np.linalg.qr(rng.standard_normal((ambient_dim, subspace_dim)))
        bases.append(basis)
        center = rng.standard_normal((subspace_dim, 1))
        coef = center + spread * rng.standard_normal((subspace_dim, per_class))
        blocks.append(basis @ coef / math.sqrt(subspace_dim * (1.0 + spread ** 2)))
    clean = np.hstack(blocks)
    mask = rng.random(clean.shape) < noise_fraction
    signs = rng.choice([-1.0, 1.0], size=clean.shape)
    x = clean + mask * signs * spike_magnitude
    labels = np.repeat(np.arange(classes), per_class)
    side = math.isqrt(ambient_dim)
    shape = (side, side) if side * side == ambient_dim else None
    ds = Dataset(x, labels, shape)
    if return_truth:
        return ds, SynthTruth(bases, clean, mask)
    return ds


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError(f"need equal non-empty lengths, got {pred.shape} and {truth.shape}")
    return float(np.mean(pred == truth))


def to_gray8(column) -> np.ndarray:
    v = np.asarray(column, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full(v.shape, 128, dtype=np.uint8)
    return np.rint((v - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_image_pgm(column, shape, path) -> None:
    """Write a vector as an 8-bit binary PGM, min-max scaled to 0..255."""
    h, w = shape
    column = np.ravel(column)
    if h * w != column.size:
        raise ValueError(f"shape {h}x{w} does not match vector of length {column.size}")
    pixels = to_gray8(column)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_image_pgm(path):
    """Parse a binary PGM written by ``write_image_pgm``; returns an h x w uint8 array."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise DataError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval}")
    pixels = np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8)
    return pixels.reshape(h, w)
