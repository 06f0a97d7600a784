"""Command-line harness: train, sweep-alpha, eval-ood, tune, predict.

Configuration is a JSON object (see ``experiments.DEFAULTS`` for keys); command
line flags override file values. Artifacts live in the ``out`` directory:

    model.json      network + posterior + config
    sigmas.json     tuned kernel variances
    *.csv / *.json  command results

Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure.
"""

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import experiments as ex
from .data import Standardizer, read_inputs_csv
from .errors import NonFiniteLoss, NotPositiveDefinite
from .laplace import probit_predict
from .metrics import format_float, reports_to_csv
from .network import accuracy, forward
from .rgpr import RgprModel, confidence, load_model, load_sigmas, rgpr_predictive, save_model, save_sigmas
from .tuning import TuneConfig, tune_sigmas, tuning_outliers

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format_float(v)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _load_config(args) -> dict:
    overrides = {}
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}")
        if not isinstance(overrides, dict):
            raise ConfigError("config must be a JSON object")
    for key, val in (("seed", args.seed), ("out", args.out), ("samples", args.samples)):
        if val is not None:
            overrides[key] = val
    if args.alpha_grid:
        try:
            overrides["alpha_grid"] = [float(a) for a in args.alpha_grid.split(",")]
        except ValueError:
            raise ConfigError(f"bad --alpha-grid {args.alpha_grid!r}")
    if args.sigma2 is not None:
        overrides["sigma2"] = _parse_sigma2(args.sigma2)
    try:
        return ex.resolve_config(overrides)
    except (KeyError, ValueError) as err:
        raise ConfigError(str(err))


def _parse_sigma2(text):
    if text == "tuned":
        return text
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad --sigma2 {text!r}")
    return vals[0] if len(vals) == 1 else vals


def _paths(cfg):
    out = cfg["out"]
    return {
        "dir": out,
        "model": os.path.join(out, "model.json"),
        "sigmas": os.path.join(out, "sigmas.json"),
    }


def _load_artifacts(cfg):
    """Model, splits and kernel for a trained run; splits regenerate from the stored config."""
    p = _paths(cfg)
    if not os.path.exists(p["model"]):
        raise ConfigError(f"missing artifact {p['model']}; run 'train' first")
    try:
        net, post, meta = load_model(p["model"])
    except (OSError, ValueError, KeyError) as err:
        raise ConfigError(f"cannot load {p['model']}: {err}")
    # the dataset is defined by the training config, not by later overrides
    train_cfg = dict(cfg)
    for key in ("dataset", "n_train", "n_val", "n_test", "noise", "n_classes", "seed"):
        train_cfg[key] = meta["config"][key]
    splits = ex.make_splits(train_cfg)
    if cfg["sigma2"] == "tuned":
        if not os.path.exists(p["sigmas"]):
            raise ConfigError(f"sigma2='tuned' but {p['sigmas']} does not exist")
        kernel = load_sigmas(p["sigmas"])
    else:
        kernel = ex.kernel_from(cfg, net.n_representations)
    return RgprModel(net, post, kernel), splits, meta


def cmd_train(cfg):
    os.makedirs(cfg["out"], exist_ok=True)
    history = []
    net, post, splits = ex.train_and_fit(cfg, history=history)
    meta = {"config": cfg, "standardizer": splits.train.standardizer.to_dict(),
            "task": splits.train.task}
    save_model(_paths(cfg)["model"], net, post, meta)
    _write_csv(os.path.join(cfg["out"], "train_log.csv"), ["epoch", "objective"],
               [(i + 1, v) for i, v in enumerate(history)])
    if ex.is_regression(cfg):
        for name, split in (("train", splits.train), ("val", splits.val)):
            pred = forward(net, split.inputs).logits[:, 0]
            print(f"{name} rmse: {math.sqrt(np.mean((pred - split.targets) ** 2)):.4f}")
    else:
        print(f"train accuracy: {accuracy(net, splits.train.inputs, splits.train.targets):.4f}")
        print(f"val accuracy: {accuracy(net, splits.val.inputs, splits.val.targets):.4f}")
    print(f"wrote {_paths(cfg)['model']}")


def cmd_sweep_alpha(cfg):
    model, splits, _ = _load_artifacts(cfg)
    rows = ex.alpha_sweep(cfg, model, splits)
    path = os.path.join(cfg["out"], "sweep_alpha.csv")
    _write_csv(path, ["alpha", "method", "mean_conf", "mean_conf_mc", "mean_var", "slope"], rows)
    print(f"wrote {path}")


def cmd_eval_ood(cfg):
    model, splits, _ = _load_artifacts(cfg)
    base = os.path.join(cfg["out"], "eval_ood")
    if ex.is_regression(cfg):
        rows = ex.regression_eval(cfg, model, splits)
        _write_csv(base + ".csv", ["method", "err_in", "err_out", "rmse"], rows)
        record = {m: {"err_in": a, "err_out": b, "rmse": c} for m, a, b, c in rows}
    else:
        rows = ex.eval_ood(cfg, model, splits)
        with open(base + ".csv", "w", newline="") as fh:
            fh.write(reports_to_csv(rows))
        record = {m: rep.to_dict() for m, rep in rows}
    with open(base + ".json", "w") as fh:
        json.dump(record, fh, sort_keys=True, indent=1)
    with open(base + ".csv") as fh:
        print(fh.read(), end="")


def cmd_tune(cfg):
    if ex.is_regression(cfg):
        raise ConfigError("tuning uses a classification entropy objective")
    model, splits, _ = _load_artifacts(cfg)
    if any(s <= 0 for s in model.kernel.sigma2_per_layer):
        raise ConfigError("tuning needs strictly positive initial sigma2 values")
    tcfg = TuneConfig(learning_rate=cfg["tune_lr"], epochs=cfg["tune_epochs"],
                      batch=cfg["tune_batch"], outlier_count=cfg["n_outliers"], seed=cfg["seed"])
    outliers = tuning_outliers(splits.train.inputs, tcfg, ex.stream_rng(cfg["seed"], "tune-outliers"))
    history = []
    tuned = tune_sigmas(model, splits.val, tcfg, outliers, history)

    held_out = tuning_outliers(splits.train.inputs, tcfg, ex.stream_rng(cfg["seed"], "tune-heldout"))
    aur_before = ex.ood_auroc(model, splits.test.inputs, held_out)
    aur_after = ex.ood_auroc(model.with_kernel(tuned), splits.test.inputs, held_out)
    save_sigmas(_paths(cfg)["sigmas"], tuned,
                {"objective_before": history[0], "objective_after": history[-1],
                 "aur_before": aur_before, "aur_after": aur_after})
    _write_csv(os.path.join(cfg["out"], "tune_log.csv"), ["epoch", "objective"],
               list(enumerate(history)))
    print(f"objective: {history[0]:.6f} -> {history[-1]:.6f}")
    print(f"held-out AUR: {aur_before:.6f} -> {aur_after:.6f}")
    print("sigma2: " + ",".join(format_float(s) for s in tuned.sigma2_per_layer))


def cmd_predict(cfg, input_path):
    model, _, meta = _load_artifacts(cfg)
    if not input_path:
        raise ConfigError("predict needs --input CSV")
    try:
        raw = read_inputs_csv(input_path)
    except (OSError, ValueError, IndexError) as err:
        raise ConfigError(f"cannot read {input_path}: {err}")
    std = Standardizer.from_dict(meta["standardizer"])
    if raw.shape[1] != model.net.n_inputs:
        raise ConfigError(f"{input_path} has {raw.shape[1]} input columns, model expects {model.net.n_inputs}")
    pred = rgpr_predictive(model, std.apply(raw))
    path = os.path.join(cfg["out"], "predictions.csv")
    if meta["task"] == "regression":
        std_dev = np.sqrt(pred.variances()[:, 0])
        _write_csv(path, ["mean", "std"], zip(pred.mean[:, 0], std_dev))
    else:
        probs = probit_predict(pred)
        C = probs.shape[1]
        rows = [list(p) + [confidence(p), a] for p, a in zip(probs, pred.rgpr_addend)]
        _write_csv(path, [f"p{c}" for c in range(C)] + ["confidence", "rgpr_var"], rows)
    print(f"wrote {path}")


def build_parser():
    parser = argparse.ArgumentParser(prog="relugp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "sweep-alpha", "eval-ood", "tune", "predict"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="artifact directory")
        p.add_argument("--samples", type=int, help="MC samples")
        p.add_argument("--alpha-grid", help="comma-separated alphas")
        p.add_argument("--sigma2", help="kernel variance: scalar, comma list, or 'tuned'")
        if name == "predict":
            p.add_argument("--input", help="CSV of raw inputs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        cfg = _load_config(args)
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "sweep-alpha":
            cmd_sweep_alpha(cfg)
        elif args.command == "eval-ood":
            cmd_eval_ood(cfg)
        elif args.command == "tune":
            cmd_tune(cfg)
        else:
            cmd_predict(cfg, args.input)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NotPositiveDefinite, NonFiniteLoss, FloatingPointError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
