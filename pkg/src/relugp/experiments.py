"""Desk-scale experiment protocols shared by the CLI and the acceptance suite.

Every random stream is derived from ``(seed, stream name)`` so that commands run
separately (train, then sweep, then eval) regenerate identical datasets.
"""

import zlib
from dataclasses import dataclass

import numpy as np

from . import data as datamod
from .baseline_gp import BnoPosterior, bno_from_net
from .kernels import LayeredDscsParams
from .laplace import fit_laplace, linearized_predictive, probit_predict
from .metrics import EvalReport, auroc, mmc
from .network import TrainConfig, forward, softmax, train_map
from .rgpr import RgprModel, confidence, mc_predict, rgpr_predictive

DEFAULTS = {
    "dataset": "two_moons",
    "n_train": 500,
    "n_val": 500,
    "n_test": 1000,
    "noise": 0.1,
    "hidden": [20, 20],
    "n_classes": 3,
    "prior_precision": 1e-2,
    "learning_rate": 1e-2,
    "epochs": 200,
    "batch_size": 50,
    "laplace_subset": "last_layer",
    "laplace_prior_precision": 100.0,
    "sigma2": 1.0,
    "alpha_grid": [1.0, 10.0, 100.0, 1000.0, 10000.0],
    "samples": 100,
    "n_outliers": 2000,
    "outlier_alpha": 2000.0,
    "n_sweep": 200,
    "bno_kernel_sigma2": 1.0,
    "bno_noise_var": 0.01,
    "tune_lr": 0.1,
    "tune_epochs": 10,
    "tune_batch": 100,
    "seed": 0,
    "out": "runs/default",
}

# keys whose defaults differ for the 1-D regression toy
REGRESSION_DEFAULTS = {
    "n_train": 200,
    "n_val": 200,
    "n_test": 500,
    "hidden": [50, 50],
    "sigma2": 1e-3,
    "laplace_prior_precision": 1.0,
    "n_outliers": 1000,
    "epochs": 500,
    "batch_size": 20,
}

DATASETS = ("two_moons", "blobs", "toy_regression")


def resolve_config(overrides: dict) -> dict:
    unknown = set(overrides) - set(DEFAULTS)
    if unknown:
        raise KeyError(f"unknown config keys: {sorted(unknown)}")
    cfg = dict(DEFAULTS)
    if overrides.get("dataset") == "toy_regression":
        cfg.update(REGRESSION_DEFAULTS)
    cfg.update(overrides)
    if cfg["dataset"] not in DATASETS:
        raise ValueError(f"dataset must be one of {DATASETS}")
    return cfg


def stream_rng(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode())
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), key])))


def is_regression(cfg) -> bool:
    return cfg["dataset"] == "toy_regression"


def _raw_dataset(cfg, m, rng):
    name = cfg["dataset"]
    if name == "two_moons":
        return datamod.two_moons(m, cfg["noise"], rng)
    if name == "toy_regression":
        return datamod.toy_regression_1d(m, cfg["noise"], rng)
    # every split shares the blob centres
    centers = datamod.random_centers(cfg["n_classes"], 2, stream_rng(cfg["seed"], "blob-centres"))
    return datamod.gaussian_blobs(m, centers, rng)


@dataclass
class Splits:
    train: datamod.LabeledDataset
    val: datamod.LabeledDataset
    test: datamod.LabeledDataset


def make_splits(cfg) -> Splits:
    seed = cfg["seed"]
    train = datamod.standardize(_raw_dataset(cfg, cfg["n_train"], stream_rng(seed, "train")))
    std = train.standardizer
    val = datamod.standardize(_raw_dataset(cfg, cfg["n_val"], stream_rng(seed, "val")), std)
    test = datamod.standardize(_raw_dataset(cfg, cfg["n_test"], stream_rng(seed, "test")), std)
    return Splits(train, val, test)


def layer_dims(cfg, splits: Splits):
    out = 1 if is_regression(cfg) else splits.train.n_classes
    return [splits.train.n_dims] + list(cfg["hidden"]) + [out]


def train_config(cfg) -> TrainConfig:
    return TrainConfig(
        prior_precision=cfg["prior_precision"],
        learning_rate=cfg["learning_rate"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
    )


def train_and_fit(cfg, splits: Splits | None = None, history: list | None = None):
    """MAP net and Laplace posterior for a config; returns ``(net, post, splits)``."""
    splits = make_splits(cfg) if splits is None else splits
    net = train_map(splits.train, train_config(cfg), layer_dims(cfg, splits),
                    stream_rng(cfg["seed"], "init+sgd"), history)
    post = fit_laplace(net, splits.train, cfg["laplace_prior_precision"], cfg["laplace_subset"])
    return net, post, splits


def kernel_from(cfg, n_layers: int, sigma2=None) -> LayeredDscsParams:
    s = cfg["sigma2"] if sigma2 is None else sigma2
    if isinstance(s, (int, float)):
        return LayeredDscsParams.uniform(n_layers, float(s))
    return LayeredDscsParams(tuple(s))


def far_outliers(cfg, splits: Splits) -> np.ndarray:
    """The far-away outlier set: uniform (classification) or Gaussian (regression) noise."""
    rng = stream_rng(cfg["seed"], "far-outliers")
    n, N, a = cfg["n_outliers"], splits.train.n_dims, cfg["outlier_alpha"]
    if is_regression(cfg):
        return datamod.gaussian_outliers(n, N, a, rng)
    return datamod.uniform_outliers(n, N, a, rng, splits.train.standardizer)


# --- classification predictors -------------------------------------------------

def predict_probs(method: str, model: RgprModel, X, samples: int = 0, rng=None):
    """Class probabilities for one of map / lll / lll-rgpr (probit) or their ``-mc`` variants."""
    net = model.net
    if method == "map":
        return softmax(forward(net, X).logits)
    off = model.with_kernel(LayeredDscsParams((0.0,) * len(model.kernel)))
    if method == "lll":
        return probit_predict(linearized_predictive(net, model.post, X))
    if method == "lll-rgpr":
        return probit_predict(rgpr_predictive(model, X))
    if method == "lll-mc":
        return mc_predict(off, X, samples, rng)
    if method == "lll-rgpr-mc":
        return mc_predict(model, X, samples, rng)
    raise ValueError(f"unknown method {method!r}")


def eval_ood(cfg, model: RgprModel, splits: Splits, outliers=None):
    """``[(method, EvalReport)]`` for inliers (test split) versus far-away outliers."""
    outliers = far_outliers(cfg, splits) if outliers is None else outliers
    rows = []
    for method in ("map", "lll", "lll-rgpr", "lll-mc", "lll-rgpr-mc"):
        rng = stream_rng(cfg["seed"], "mc-" + method)
        p_in = predict_probs(method, model, splits.test.inputs, cfg["samples"], rng)
        p_out = predict_probs(method, model, outliers, cfg["samples"], rng)
        rows.append((method, EvalReport.from_predictions(p_in, splits.test.targets, p_out)))
    return rows


# --- regression ------------------------------------------------------------------

def regression_stats(mean, var, targets=None):
    std = np.sqrt(np.maximum(var, 0.0))
    rmse = float("nan") if targets is None else float(np.sqrt(np.mean((mean - targets) ** 2)))
    return float(np.mean(std)), rmse


def regression_predict(method: str, model: RgprModel, X, bno: BnoPosterior | None = None):
    """Predictive mean and latent variance for lll / lll-rgpr / bno / map."""
    if method == "map":
        m = forward(model.net, X).logits[:, 0]
        return m, np.zeros_like(m)
    if method == "bno":
        return bno.predict(X)
    pred = linearized_predictive(model.net, model.post, X) if method == "lll" else rgpr_predictive(model, X)
    return pred.mean[:, 0], pred.variances()[:, 0]


def regression_eval(cfg, model: RgprModel, splits: Splits, outliers=None, bno=None):
    """``[(method, err_in, err_out, rmse)]`` with error bars averaged over each set."""
    outliers = far_outliers(cfg, splits) if outliers is None else outliers
    if bno is None:
        bno = BnoPosterior(bno_from_net(model.net, splits.train, cfg["bno_kernel_sigma2"],
                                        cfg["bno_noise_var"], cfg["laplace_prior_precision"]))
    rows = []
    for method in ("lll", "lll-rgpr", "bno"):
        m_in, v_in = regression_predict(method, model, splits.test.inputs, bno)
        _, v_out = regression_predict(method, model, outliers, bno)
        err_in, rmse = regression_stats(m_in, v_in, splits.test.targets)
        err_out, _ = regression_stats(np.zeros(len(v_out)), v_out)
        rows.append((method, err_in, err_out, rmse))
    return rows


# --- alpha sweep -----------------------------------------------------------------

def alpha_sweep(cfg, model: RgprModel, splits: Splits, bno=None):
    """Rows ``(alpha, method, mean_conf, mean_conf_mc, mean_var, slope)``.

    ``mean_var`` is the mean over points and classes of the marginal output
    variance; ``slope`` is the log-log slope of ``mean_var`` against the previous
    alpha of the same method.
    """
    X = splits.test.inputs[: cfg["n_sweep"]]
    reg = is_regression(cfg)
    methods = ("map", "lll", "lll-rgpr") + (("bno",) if reg else ())
    if reg and bno is None:
        bno = BnoPosterior(bno_from_net(model.net, splits.train, cfg["bno_kernel_sigma2"],
                                        cfg["bno_noise_var"], cfg["laplace_prior_precision"]))
    nan = float("nan")
    rows = []
    for method in methods:
        prev = None
        for alpha in cfg["alpha_grid"]:
            Xa = alpha * X
            if reg:
                _, var = regression_predict(method, model, Xa, bno)
                conf = conf_mc = nan
                mean_var = float(np.mean(var))
            else:
                conf = mmc(confidence(predict_probs(method, model, Xa)))
                if method == "map":
                    conf_mc, mean_var = conf, 0.0
                else:
                    rng = stream_rng(cfg["seed"], f"sweep-{method}-{alpha!r}")
                    conf_mc = mmc(confidence(predict_probs(method + "-mc", model, Xa, cfg["samples"], rng)))
                    pred = (linearized_predictive(model.net, model.post, Xa) if method == "lll"
                            else rgpr_predictive(model, Xa))
                    mean_var = float(np.mean(pred.variances()))
            slope = nan
            if prev is not None and prev[1] > 0 and mean_var > 0 and alpha != prev[0]:
                slope = float(np.log(mean_var / prev[1]) / np.log(alpha / prev[0]))
            rows.append((float(alpha), method, conf, conf_mc, mean_var, slope))
            prev = (alpha, mean_var)
    return rows


def ood_auroc(model: RgprModel, X_in, X_out) -> float:
    p_in = probit_predict(rgpr_predictive(model, X_in))
    p_out = probit_predict(rgpr_predictive(model, X_out))
    return auroc(confidence(p_in), confidence(p_out))
