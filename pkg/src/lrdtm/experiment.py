"""Repeated-split experiments, ablations, parameter grids and decomposition export.

Every repeat ``r`` draws its split with seed ``seed_base + r``, so runs are
reproducible and different modes can be compared on identical splits.
"""

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .datakit import (Dataset, SplitSpec, accuracy, load_dataset, normalize_columns,
                      stratified_split, synth_subspace_dataset, write_image_pgm)
from .dtml import Mode, dtml_fit, fit_ablation
from .latlrr import latlrr_fit
from .pipeline import (LabelCodebook, TrainParams, fit_model_projection, nearest_neighbor,
                       one_hot, predict, train)

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("repeat", "seed", "train_per_class", "mode", "accuracy",
                  "iters_latlrr", "sweeps_dtml", "objective_final")
CONVERGENCE_COLUMNS = ("repeat", "sweep", "objective", "train_accuracy")


def candidate_grid() -> list:
    """1e-5, 5e-5, 1e-4, 5e-4, ..., 5e2, 1e3 (17 values)."""
    values = []
    for exp in range(-5, 3):
        values += [float(f"1e{exp}"), float(f"5e{exp}")]
    return values + [1e3]


DEFAULT_GRID = candidate_grid()


@dataclass(frozen=True)
class SynthConfig:
    classes: int = 5
    subspace_dim: int = 10
    ambient_dim: int = 50
    per_class: int = 20
    noise_fraction: float = 0.05
    spike_magnitude: float = 0.5
    spread: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: str | None = None
    labels_path: str | None = None
    image_shape: tuple | None = None
    synth: SynthConfig | None = None
    train_per_class: int = 10
    repeats: int = 20
    seed_base: int = 0
    params: TrainParams = field(default_factory=TrainParams)
    output_dir: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.train_per_class < 1:
            raise ValueError("train_per_class must be >= 1")
        if self.synth is None and not (self.data_path and self.labels_path):
            raise ValueError("need either synthetic settings or both data and labels paths")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def snapshot(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.to_dict()
        return d


@dataclass
class RepeatResult:
    repeat: int
    seed: int
    train_per_class: int
    mode: str
    accuracy: float
    iters_latlrr: int
    sweeps_dtml: int
    objective_final: float
    trace: list = field(default_factory=list)  # (sweep, objective, train_accuracy)
    train_idx: np.ndarray | None = None


@dataclass
class ExperimentReport:
    mode: str
    train_per_class: int
    repeats: list
    wall_time: float
    config: dict

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.accuracy for r in self.repeats])

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


class RepeatError(RuntimeError):
    def __init__(self, repeat, stage, cause):
        self.repeat, self.stage, self.cause = repeat, stage, cause
        super().__init__(f"repeat {repeat} failed during {stage}: {cause}")


def load_config_dataset(config: ExperimentConfig) -> Dataset:
    if config.synth is not None:
        s = config.synth
        ds = synth_subspace_dataset(s.classes, s.subspace_dim, s.ambient_dim, s.per_class,
                                    s.noise_fraction, s.spike_magnitude, s.spread, s.seed)
        if config.image_shape is not None:
            ds = Dataset(ds.x, ds.labels, tuple(config.image_shape))
        return ds
    return load_dataset(config.data_path, config.labels_path, config.image_shape)


def _fmt(v) -> str:
    return format(v, ".17g") if isinstance(v, float) else str(v)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _run_repeat(ds: Dataset, config: ExperimentConfig, params: TrainParams, repeat: int,
                latlrr_cache: dict | None = None) -> RepeatResult:
    seed = config.seed_base + repeat
    stage = "split"
    try:
        train_idx, test_idx = stratified_split(ds.labels, SplitSpec(config.train_per_class, seed))
        x_train, y_train = ds.x[:, train_idx], ds.labels[train_idx]
        y_idx = LabelCodebook.from_labels(y_train).encode(y_train)
        trace = []

        def record(sweep, w1, w2, obj):
            # training accuracy against the one-hot label vertices
            emb = w1 @ xz + w2 @ lx
            trace.append((sweep, float(obj), accuracy(np.argmax(emb, axis=0), y_idx)))

        stage = "latlrr"
        lat = None if latlrr_cache is None else latlrr_cache.get(repeat)
        xs = normalize_columns(x_train) if params.normalize else x_train
        if lat is None:
            lat = latlrr_fit(xs, params.lambda1, params.lambda2, params.solver)
            if latlrr_cache is not None:
                latlrr_cache[repeat] = lat
        xz, lx = xs @ lat.z, lat.l @ xs
        stage = "train"
        model = train(x_train, y_train, params, callback=record, latlrr=lat)
        if not trace:  # ablation modes have a closed form, one step
            record(1, model.dtml.w1, model.dtml.w2, model.dtml.objective_trace[-1])
        trace.insert(0, (0, float(model.dtml.objective_trace[0]), accuracy(np.zeros_like(y_idx), y_idx)))
        stage = "predict"
        pred = model.codebook.decode(predict(model, ds.x[:, test_idx]))
    except Exception as exc:
        raise RepeatError(repeat, stage, exc) from exc
    return RepeatResult(repeat, seed, config.train_per_class, params.mode.value,
                        accuracy(pred, ds.labels[test_idx]), lat.iterations, model.dtml.sweeps,
                        float(model.dtml.objective_trace[-1]), trace, train_idx)


def _map(fn, items, jobs):
    if jobs == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def write_report(report: ExperimentReport, outdir, tag: str | None = None) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tag = tag or f"{report.mode}_k{report.train_per_class}"
    _write_csv(outdir / f"report_{tag}.csv", REPORT_COLUMNS,
               [[getattr(r, c) for c in REPORT_COLUMNS] for r in report.repeats])
    _write_csv(outdir / f"convergence_{tag}.csv", CONVERGENCE_COLUMNS,
               [[r.repeat, *row] for r in report.repeats for row in r.trace])
    summary = {"mode": report.mode, "train_per_class": report.train_per_class,
               "repeats": len(report.repeats), "mean_accuracy": report.mean,
               "std_accuracy": report.std, "wall_time_s": report.wall_time,
               "config": report.config}
    (outdir / f"summary_{tag}.json").write_text(json.dumps(summary, indent=2) + "\n")


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None,
                   latlrr_cache: dict | None = None, write: bool = True) -> ExperimentReport:
    """Train and test on ``config.repeats`` seeded splits with ``config.params``."""
    ds = dataset if dataset is not None else load_config_dataset(config)
    t0 = time.perf_counter()
    results = _map(lambda r: _run_repeat(ds, config, config.params, r, latlrr_cache),
                   range(config.repeats), config.jobs)
    report = ExperimentReport(config.params.mode.value, config.train_per_class, results,
                              time.perf_counter() - t0, config.snapshot())
    log.info("%s k=%d: mean accuracy %.4f over %d repeats", report.mode,
             report.train_per_class, report.mean, config.repeats)
    if write and config.output_dir:
        write_report(report, config.output_dir)
    return report


ABLATION_ORDER = (Mode.SALIENT_ONLY, Mode.SHARED_SINGLE, Mode.FULL)


def run_ablation(config: ExperimentConfig, train_sizes=None, mode_params: dict | None = None) -> dict:
    """Run the three model variants on identical splits and LatLRR features.

    Returns ``{(mode, train_per_class): ExperimentReport}``. `mode_params`
    optionally overrides the parameters per mode (e.g. tuned penalties);
    all modes must then still share lambda1, lambda2 and solver options so
    the cached decomposition applies.
    """
    ds = load_config_dataset(config)
    sizes = list(train_sizes or [config.train_per_class])
    mode_params = mode_params or {}
    reports = {}
    for k in sizes:
        cache = {}
        for mode in ABLATION_ORDER:
            params = mode_params.get(mode, replace(config.params, mode=mode))
            cfg = replace(config, train_per_class=k, params=params)
            reports[(mode, k)] = run_experiment(cfg, ds, cache, write=False)
    if config.output_dir:
        outdir = Path(config.output_dir)
        for report in reports.values():
            write_report(report, outdir)
        _write_csv(outdir / "ablation.csv", ["mode", *map(str, sizes)],
                   [[m.value, *[reports[(m, k)].mean for k in sizes]] for m in ABLATION_ORDER])
    return reports


@dataclass
class GridResult:
    lambda1: float
    lambda2: float
    stage1: list  # (lambda1, lambda2, score)
    surface: list  # (lambda3, lambda4, score) or (lambda, score) for ablation modes
    best_stage2: tuple
    best_score: float
    params: TrainParams


def _holdout_splits(ds: Dataset, config: ExperimentConfig, grid_repeats: int):
    """Per repeat: training split, then a stratified 20% validation holdout (>= 1 per class)."""
    k = config.train_per_class
    n_val = max(1, int(round(0.2 * k)))
    if k - n_val < 1:
        raise ValueError("train_per_class too small for a validation holdout")
    splits = []
    for r in range(grid_repeats):
        seed = config.seed_base + r
        train_idx, _ = stratified_split(ds.labels, SplitSpec(k, seed))
        sub, val = stratified_split(ds.labels[train_idx], SplitSpec(k - n_val, seed))
        splits.append((train_idx[sub], train_idx[val]))
    return splits


def _argmax_first(rows):
    """Best score; among ties the largest product of penalties, then grid order."""
    best = max(range(len(rows)), key=lambda i: (rows[i][-1], float(np.prod(rows[i][:-1])), -i))
    return rows[best]


class _Features:
    """Training features and test-time features for one holdout, for a fixed LatLRR fit."""

    def __init__(self, ds, fit_idx, val_idx, params: TrainParams, lambda1, lambda2):
        x, xv = ds.x[:, fit_idx], ds.x[:, val_idx]
        if params.normalize:
            x, xv = normalize_columns(x), normalize_columns(xv)
        lat = latlrr_fit(x, lambda1, lambda2, params.solver)
        self.a, self.b = x @ lat.z, lat.l @ x
        p = fit_model_projection(x, self.a, params.projection_rtol).p
        self.av, self.bv = p @ xv, lat.l @ xv
        classes = np.unique(ds.labels[fit_idx])
        self.y_idx = np.searchsorted(classes, ds.labels[fit_idx])
        self.yv_idx = np.searchsorted(classes, ds.labels[val_idx])
        self.y = one_hot(self.y_idx, classes.size)

    def score(self, w1, w2, nn_target):
        emb = w1 @ self.av + w2 @ self.bv
        if nn_target == "labels":
            c = self.y.shape[0]
            pred = nearest_neighbor(np.eye(c), np.arange(c), emb)
        else:
            pred = nearest_neighbor(w1 @ self.a + w2 @ self.b, self.y_idx, emb)
        return accuracy(pred, self.yv_idx)


def _head_score(feats, params: TrainParams, mode: Mode, l3, l4=None):
    scores = []
    for f in feats:
        if mode is Mode.FULL:
            m = dtml_fit(f.a, f.b, f.y, l3, l4, params.fit)
        else:
            m = fit_ablation(mode, f.a, f.b, f.y, l3)
        scores.append(f.score(m.w1, m.w2, params.nn_target))
    return float(np.mean(scores))


def grid_search(config: ExperimentConfig, grid=None, lambda1_grid=None, lambda2_grid=None,
                grid_repeats: int = 1, dataset: Dataset | None = None) -> GridResult:
    """Two-stage tuning on validation holdouts carved out of the training split.

    Stage 1 scores every (lambda1, lambda2) pair from `lambda1_grid` x
    `lambda2_grid` (both default to `grid`) by downstream validation accuracy
    with the configured head penalties. Stage 2 fixes the winner and scores every (lambda3, lambda4)
    pair from `grid`; ablation modes tune their single penalty instead.
    Scores are averaged over `grid_repeats` seeded splits. Ties go to the
    most strongly regularized candidate (largest product of penalties), then
    to the first in grid order.
    """
    grid = list(DEFAULT_GRID if grid is None else grid)
    g1 = list(grid if lambda1_grid is None else lambda1_grid)
    g2 = list(grid if lambda2_grid is None else lambda2_grid)
    if not (grid and g1 and g2) or min(grid + g1 + g2) <= 0:
        raise ValueError("grids must be non-empty and strictly positive")
    ds = dataset if dataset is not None else load_config_dataset(config)
    params = config.params
    splits = _holdout_splits(ds, config, grid_repeats)
    l3_fixed = params.lambda3 if params.mode is Mode.FULL else params.single_lambda

    stage1 = []
    cache = {}
    for l1 in g1:
        for l2 in g2:
            feats = [_Features(ds, f, v, params, l1, l2) for f, v in splits]
            score = _head_score(feats, params, params.mode, l3_fixed, params.lambda4)
            stage1.append((l1, l2, score))
            # keep only the running winner's features
            if _argmax_first(stage1) == stage1[-1]:
                cache = {(l1, l2): feats}
    l1, l2, _ = _argmax_first(stage1)
    feats = cache[(l1, l2)]

    surface = []
    if params.mode is Mode.FULL:
        for l3 in grid:
            for l4 in grid:
                surface.append((l3, l4, _head_score(feats, params, Mode.FULL, l3, l4)))
        b3, b4, best = _argmax_first(surface)
        tuned = replace(params, lambda1=l1, lambda2=l2, lambda3=b3, lambda4=b4)
        best_stage2 = (b3, b4)
    else:
        for lam in grid:
            surface.append((lam, _head_score(feats, params, params.mode, lam)))
        blam, best = _argmax_first(surface)
        tuned = replace(params, lambda1=l1, lambda2=l2, ablation_lambda=blam)
        best_stage2 = (blam,)

    result = GridResult(l1, l2, stage1, surface, best_stage2, best, tuned)
    if config.output_dir:
        outdir = Path(config.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(outdir / "grid_stage1.csv", ["lambda1", "lambda2", "accuracy"], stage1)
        header = ["lambda3", "lambda4", "accuracy"] if params.mode is Mode.FULL else ["lambda", "accuracy"]
        _write_csv(outdir / "grid_surface.csv", header, surface)
        (outdir / "grid_best.json").write_text(json.dumps(
            {"params": tuned.to_dict(), "validation_accuracy": best}, indent=2) + "\n")
    return result


def decompose(dataset: Dataset, lambda1: float, lambda2: float, sample_indices, outdir,
              normalize: bool = True, solver=None) -> list:
    """Write original / XZ / LX / E images for each requested sample as PGM files.

    The decomposition runs on the whole dataset. Returns the written paths.
    """
    if dataset.image_shape is None:
        raise ValueError("dataset has no image shape; pass one to export images")
    x = normalize_columns(dataset.x) if normalize else dataset.x
    lat = latlrr_fit(x, lambda1, lambda2, solver)
    parts = {"original": x, "xz": x @ lat.z, "lx": lat.l @ x, "e": lat.e}
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in sample_indices:
        if not 0 <= i < dataset.n_samples:
            raise IndexError(f"sample index {i} out of range")
        for name, mat in parts.items():
            path = outdir / f"sample{i:05d}_{name}.pgm"
            write_image_pgm(mat[:, i], dataset.image_shape, path)
            written.append(path)
    return written
