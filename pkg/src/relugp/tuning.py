"""Fit the per-layer kernel variances on inliers versus synthetic noise outliers.

Objective (minimized)::

    L(sigma2) = mean_in H(p(x_in; sigma2)) - mean_out H(p(x_out; sigma2))

with ``p`` the probit predictive of the RGPR-augmented model. Because the DSCS
variance is linear in each ``sigma2_l``, the base predictive and the per-layer
kernel terms are computed once and every objective evaluation is a cheap array
operation. Gradients w.r.t. ``log sigma2`` come from central differences.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import noise_outliers
from .errors import NonFiniteLoss
from .kernels import LayeredDscsParams, layer_kernel_terms
from .laplace import linearized_predictive
from .metrics import entropy
from .network import forward, softmax
from .numerics import make_rng
from .rgpr import RgprModel

FD_STEP = 1e-4


@dataclass
class TuneConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch: int = 100
    outlier_count: int = 2000
    outlier_factors: tuple = (1.0, 10.0, 100.0)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch < 1 or self.outlier_count < 1 or self.epochs < 0:
            raise ValueError("tuning config fields must be positive")


class _Cache:
    """Per-point base means, base variances and unit kernel terms."""

    def __init__(self, model: RgprModel, X):
        pred = linearized_predictive(model.net, model.post, X)
        self.mean = pred.mean
        self.base_var = np.diagonal(pred.cov, axis1=-2, axis2=-1)
        self.terms = layer_kernel_terms(forward(model.net, X).activations).T  # (M, L)

    def probs(self, sigma2, idx=None):
        mean, var, terms = self.mean, self.base_var, self.terms
        if idx is not None:
            mean, var, terms = mean[idx], var[idx], terms[idx]
        v = var + (terms @ sigma2)[:, None]
        return softmax(mean / np.sqrt(1.0 + math.pi / 8.0 * v))


def objective(cache_in: _Cache, cache_out: _Cache, log_sigma2, idx_in=None, idx_out=None) -> float:
    s = np.exp(log_sigma2)
    h_in = entropy(cache_in.probs(s, idx_in)).mean()
    h_out = entropy(cache_out.probs(s, idx_out)).mean()
    return float(h_in - h_out)


def _fd_grad(fun, x):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = FD_STEP
        g[i] = (fun(x + e) - fun(x - e)) / (2 * FD_STEP)
    return g


def tuning_outliers(train_inputs, cfg: TuneConfig, rng=None) -> np.ndarray:
    """Uniform noise in the bounding box of the (standardized) training inputs,
    each point multiplied by one of ``cfg.outlier_factors``."""
    rng = make_rng(cfg.seed) if rng is None else rng
    lo, hi = train_inputs.min(axis=0), train_inputs.max(axis=0)
    return noise_outliers(cfg.outlier_count, lo, hi, rng, cfg.outlier_factors)


def tune_sigmas(model: RgprModel, val_data, cfg: TuneConfig, outliers=None,
                history: list | None = None) -> LayeredDscsParams:
    """Adam on ``log sigma2`` with an epoch-level safeguard.

    Minibatches pair inliers and outliers through one shared permutation
    (indices taken modulo each set's size). After every epoch the full-data
    objective is checked; an epoch that raised it is undone and the learning
    rate halved, so the objective never increases across epochs. ``history``
    receives the full-data objective at the start and after each epoch.
    """
    sigma2 = np.asarray(model.kernel.sigma2_per_layer, dtype=np.float64)
    if np.any(sigma2 <= 0):
        raise ValueError("tuning needs strictly positive initial layer variances")
    if len(val_data) == 0:
        raise ValueError("empty validation set")
    rng = make_rng(cfg.seed)
    if outliers is None:
        outliers = tuning_outliers(val_data.inputs, cfg, rng)

    cin = _Cache(model, val_data.inputs)
    cout = _Cache(model, outliers)
    n_in, n_out = len(val_data), len(outliers)
    n = max(n_in, n_out)

    theta = np.log(sigma2)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr = cfg.learning_rate
    step = 0

    current = objective(cin, cout, theta)
    if not math.isfinite(current):
        raise NonFiniteLoss("tuning objective is not finite at the initial point")
    if history is not None:
        history.append(current)

    for _ in range(cfg.epochs):
        saved = (theta.copy(), m.copy(), v.copy(), step)
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch):
            idx = perm[start:start + cfg.batch]
            i_in, i_out = idx % n_in, idx % n_out
            g = _fd_grad(lambda t: objective(cin, cout, t, i_in, i_out), theta)
            if not np.all(np.isfinite(g)):
                raise NonFiniteLoss("tuning gradient is not finite")
            step += 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1**step)
            vhat = v / (1 - b2**step)
            theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
        new = objective(cin, cout, theta)
        if not math.isfinite(new):
            raise NonFiniteLoss("tuning objective is not finite")
        if new > current:
            theta, m, v, step = saved
            lr *= 0.5
        else:
            current = new
        if history is not None:
            history.append(current)
    return LayeredDscsParams(tuple(np.exp(theta)))
