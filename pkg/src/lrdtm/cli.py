"""Command-line entry point: ``lrdtm {train,predict,bench,ablate,grid,decompose}``.

Settings resolve as command-line flag > ``--config`` JSON file > built-in
default. The config file is a flat JSON object keyed by the long flag names
with dashes replaced by underscores, e.g. ``{"lambda3": 0.5, "synth": true}``.

Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import experiment as ex
from .datakit import accuracy, write_labels_csv
from .dtml import FitOptions, Mode
from .errors import DataError, NumericalError
from .latlrr import SolverOptions
from .pipeline import NN_TARGETS, TrainParams, load_model, predict, save_model, train

COMMANDS = ("train", "predict", "bench", "ablate", "grid", "decompose")
OUTPUT_ENV = "LRDTM_OUTPUT_DIR"

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3

_P, _S, _F, _X = TrainParams(), SolverOptions(), FitOptions(), ex.SynthConfig()

DEFAULTS = {
    "data": None, "labels": None, "image_shape": None,
    "synth": False, "classes": _X.classes, "subspace_dim": _X.subspace_dim,
    "ambient_dim": _X.ambient_dim, "per_class": _X.per_class,
    "noise_fraction": _X.noise_fraction, "spike_magnitude": _X.spike_magnitude,
    "spread": _X.spread, "synth_seed": _X.seed,
    "lambda1": _P.lambda1, "lambda2": _P.lambda2, "lambda3": _P.lambda3, "lambda4": _P.lambda4,
    "mode": _P.mode.value, "ablation_lambda": None, "nn_target": _P.nn_target,
    "no_normalize": False, "projection_rtol": _P.projection_rtol,
    "tol": _S.tol, "max_iter": _S.max_iter, "mu0": _S.mu0, "rho": _S.rho, "mu_max": _S.mu_max,
    "fit_tol": _F.tol, "fit_max_iter": _F.max_iter, "fit_step_tol": _F.step_tol,
    "train_per_class": [10], "repeats": 20, "seed": 0, "jobs": 1, "out": None,
    "model": None, "indices": [0], "grid": None, "lambda1_grid": None, "lambda2_grid": None,
    "grid_repeats": 1, "verbose": False,
}


@dataclass
class CliRequest:
    command: str
    config: ex.ExperimentConfig
    options: dict


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _pos_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _fraction(text):
    v = float(text)
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1), got {text}")
    return v


def _shape(text):
    try:
        h, w = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("image dimensions must be >= 1")
    return (h, w)


def _default_out():
    return os.environ.get(OUTPUT_ENV, "results")


def _add(group, flag, help, **kw):
    dest = flag.lstrip("-").replace("-", "_")
    default = _default_out() if dest == "out" else DEFAULTS[dest]
    shown = " ".join(map(str, default)) if isinstance(default, list) else default
    group.add_argument(flag, dest=dest, default=argparse.SUPPRESS,
                       help=f"{help} (default: {shown})", **kw)


def _common(command):
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="JSON", help="JSON file of flag values (default: none)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                   help="log progress to stderr (default: off)")

    d = p.add_argument_group("data")
    _add(d, "--data", "matrix CSV, one sample per row", metavar="CSV")
    _add(d, "--labels", "integer label CSV, one per row", metavar="CSV")
    _add(d, "--image-shape", "image height x width for PGM export", type=_shape, metavar="HxW")
    _add(d, "--synth", "use a synthetic union-of-subspaces dataset", action="store_true")
    _add(d, "--classes", "synthetic classes", type=_pos_int)
    _add(d, "--subspace-dim", "synthetic subspace dimension", type=_pos_int)
    _add(d, "--ambient-dim", "synthetic ambient dimension", type=_pos_int)
    _add(d, "--per-class", "synthetic samples per class", type=_pos_int)
    _add(d, "--noise-fraction", "fraction of entries hit by spikes", type=_fraction)
    _add(d, "--spike-magnitude", "spike size", type=float)
    _add(d, "--spread", "within-class scatter relative to the class center", type=float)
    _add(d, "--synth-seed", "seed of the synthetic data", type=_nonneg_int)

    m = p.add_argument_group("model")
    _add(m, "--lambda1", "nuclear-norm weight on L", type=_positive)
    _add(m, "--lambda2", "l1 weight on the sparse part E", type=_positive)
    _add(m, "--lambda3", "ridge penalty on W1", type=_positive)
    _add(m, "--lambda4", "ridge penalty on W2", type=_positive)
    _add(m, "--mode", "model variant", choices=[x.value for x in Mode])
    _add(m, "--ablation-lambda", "ridge penalty of the single-matrix variants; unset uses --lambda4",
         type=_positive)
    _add(m, "--nn-target", "nearest-neighbour reference set", choices=NN_TARGETS)
    _add(m, "--no-normalize", "skip unit-norm scaling of samples", action="store_true")
    _add(m, "--projection-rtol", "pseudo-inverse cutoff relative to the largest singular value",
         type=_fraction)

    s = p.add_argument_group("solvers")
    _add(s, "--tol", "LatLRR stopping tolerance", type=_positive)
    _add(s, "--max-iter", "LatLRR iteration cap", type=_pos_int)
    _add(s, "--mu0", "initial penalty parameter", type=_positive)
    _add(s, "--rho", "penalty growth factor (> 1)", type=_positive)
    _add(s, "--mu-max", "penalty cap", type=_positive)
    _add(s, "--fit-tol", "relative objective change that stops the alternating updates", type=_positive)
    _add(s, "--fit-max-iter", "sweep cap of the alternating updates", type=_pos_int)
    _add(s, "--fit-step-tol", "optional relative iterate-change tolerance", type=_positive)

    r = p.add_argument_group("run")
    if command in ("bench", "ablate", "grid"):
        nargs = "+" if command == "ablate" else None
        _add(r, "--train-per-class", "training samples per class", type=_pos_int, nargs=nargs)
        _add(r, "--repeats", "seeded repeats", type=_pos_int)
        _add(r, "--seed", "seed of repeat 0; repeat r uses seed + r", type=_nonneg_int)
    if command in ("bench", "ablate"):
        _add(r, "--jobs", "repeats run concurrently", type=_pos_int)
    if command == "grid":
        _add(r, "--grid", "candidate values for lambda3/lambda4 (default set when unset)",
             type=_positive, nargs="+")
        _add(r, "--lambda1-grid", "candidates for lambda1 (falls back to --grid)", type=_positive, nargs="+")
        _add(r, "--lambda2-grid", "candidates for lambda2 (falls back to --grid)", type=_positive, nargs="+")
        _add(r, "--grid-repeats", "validation splits averaged per candidate", type=_pos_int)
    if command in ("train", "predict"):
        _add(r, "--model", "model file (.npz)", metavar="NPZ")
    if command == "decompose":
        _add(r, "--indices", "sample indices to export", type=_nonneg_int, nargs="+")
    _add(r, "--out", f"output directory, or predictions CSV for predict; env {OUTPUT_ENV} sets the default",
         metavar="PATH")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lrdtm", description="Low-rank double transformation matrix classifier.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    helps = {
        "train": "fit a model on a dataset and save it",
        "predict": "classify samples with a saved model",
        "bench": "repeated seeded train/test splits",
        "ablate": "compare the three model variants on shared splits",
        "grid": "two-stage parameter search on validation holdouts",
        "decompose": "export original/XZ/LX/E images as PGM",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[_common(name)], help=helps[name], description=helps[name],
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def _load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"{path}: unknown keys {unknown}")
    return data


def _resolve(ns: argparse.Namespace) -> dict:
    values = dict(DEFAULTS, out=_default_out())
    if ns.config:
        values.update(_load_config_file(ns.config))
    values.update({k: v for k, v in vars(ns).items() if k not in ("command", "config")})
    if isinstance(values["train_per_class"], int):
        values["train_per_class"] = [values["train_per_class"]]
    if values["image_shape"] is not None:
        values["image_shape"] = tuple(values["image_shape"])
    return values


def _to_config(command, v: dict) -> ex.ExperimentConfig:
    if not v["synth"] and not (v["data"] and (v["labels"] or command == "predict")):
        raise UsageError("give --data and --labels, or --synth")
    if v["synth"] and v["data"]:
        raise UsageError("--synth and --data are mutually exclusive")
    if command != "ablate" and len(v["train_per_class"]) != 1:
        raise UsageError("only ablate accepts several --train-per-class values")
    if command in ("train", "predict") and not v["model"]:
        raise UsageError(f"{command} needs --model")
    try:
        params = TrainParams(
            lambda1=v["lambda1"], lambda2=v["lambda2"], lambda3=v["lambda3"], lambda4=v["lambda4"],
            mode=Mode(v["mode"]), ablation_lambda=v["ablation_lambda"], nn_target=v["nn_target"],
            normalize=not v["no_normalize"], projection_rtol=v["projection_rtol"],
            solver=SolverOptions(v["tol"], v["max_iter"], v["mu0"], v["rho"], v["mu_max"]),
            fit=FitOptions(v["fit_tol"], v["fit_max_iter"], v["fit_step_tol"]),
        )
        synth = None
        if v["synth"]:
            synth = ex.SynthConfig(v["classes"], v["subspace_dim"], v["ambient_dim"], v["per_class"],
                                   v["noise_fraction"], v["spike_magnitude"], v["spread"], v["synth_seed"])
        return ex.ExperimentConfig(
            data_path=v["data"], labels_path=v["labels"] or ("-" if command == "predict" else None),
            image_shape=v["image_shape"], synth=synth, train_per_class=v["train_per_class"][0],
            repeats=v["repeats"], seed_base=v["seed"], params=params, output_dir=v["out"],
            jobs=v["jobs"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def parse_cli(argv=None) -> CliRequest:
    """Parse and validate arguments. Usage problems exit with status 1."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        values = _resolve(ns)
        config = _to_config(ns.command, values)
    except (UsageError, OSError) as exc:
        parser.error(str(exc))
    return CliRequest(ns.command, config, values)


def _dataset_for_predict(config):
    from .datakit import Dataset, read_matrix_csv

    if config.synth is not None:
        return ex.load_config_dataset(config), True
    x = read_matrix_csv(config.data_path)
    if config.labels_path and config.labels_path != "-":
        return ex.load_config_dataset(config), True
    return Dataset(x, np.zeros(x.shape[1], dtype=np.int64)), False


def run(req: CliRequest) -> None:
    cfg, opt = req.config, req.options
    if req.command == "train":
        ds = ex.load_config_dataset(cfg)
        model = train(ds.x, ds.labels, cfg.params)
        save_model(model, opt["model"])
        print(f"trained on {ds.n_samples} samples, {model.codebook.n_classes} classes; "
              f"projection residual {model.projection.fit_residual:.3g}; saved {opt['model']}")
    elif req.command == "predict":
        model = load_model(opt["model"])
        ds, labelled = _dataset_for_predict(cfg)
        pred = model.codebook.decode(predict(model, ds.x))
        out = Path(opt["out"])
        if out.is_dir() or not out.suffix:
            out.mkdir(parents=True, exist_ok=True)
            out = out / "predictions.csv"
        write_labels_csv(pred, out)
        msg = f"wrote {pred.size} predictions to {out}"
        if labelled:
            msg += f"; accuracy {accuracy(pred, ds.labels):.4f}"
        print(msg)
    elif req.command == "bench":
        rep = ex.run_experiment(cfg)
        print(f"{rep.mode} k={rep.train_per_class}: mean {rep.mean:.4f} std {rep.std:.4f} "
              f"over {len(rep.repeats)} repeats -> {cfg.output_dir}")
    elif req.command == "ablate":
        reports = ex.run_ablation(cfg, train_sizes=opt["train_per_class"])
        for (mode, k), rep in reports.items():
            print(f"{mode.value:>8} k={k}: mean {rep.mean:.4f} std {rep.std:.4f}")
        print(f"table written to {Path(cfg.output_dir) / 'ablation.csv'}")
    elif req.command == "grid":
        res = ex.grid_search(cfg, grid=opt["grid"], lambda1_grid=opt["lambda1_grid"],
                             lambda2_grid=opt["lambda2_grid"], grid_repeats=opt["grid_repeats"])
        print(f"lambda1={res.lambda1:g} lambda2={res.lambda2:g} stage2={res.best_stage2} "
              f"validation accuracy {res.best_score:.4f} -> {cfg.output_dir}")
    elif req.command == "decompose":
        ds = ex.load_config_dataset(cfg)
        if ds.image_shape is None:
            raise DataError("dataset has no image shape; pass --image-shape HxW")
        paths = ex.decompose(ds, cfg.params.lambda1, cfg.params.lambda2, opt["indices"],
                             cfg.output_dir, cfg.params.normalize, cfg.params.solver)
        print(f"wrote {len(paths)} images to {cfg.output_dir}")


def _exit_code(exc) -> int | None:
    if isinstance(exc, ex.RepeatError):
        return _exit_code(exc.cause)
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    if isinstance(exc, (ValueError, IndexError)):
        return EXIT_DATA
    return None


def main(argv=None) -> int:
    req = parse_cli(argv)
    logging.basicConfig(level=logging.INFO if req.options["verbose"] else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(req)
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"lrdtm: error: {exc}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
