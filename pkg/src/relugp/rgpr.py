"""ReLU-GP residual: an additive DSCS prior on top of a Gaussian-posterior network.

The prior is never conditioned on data. It leaves the predictive mean alone and
adds ``sum_l k(h_l, h_l; sigma2_l)`` to the variance of every output, which
grows cubically along any ray leaving the origin.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .kernels import LayeredDscsParams, layered_dscs_var
from .laplace import GaussianPosterior, PredictiveGaussian, linearized_predictive
from .network import ReluNet, forward, softmax

MODEL_FORMAT = "relugp.model"
SIGMAS_FORMAT = "relugp.sigmas"
FORMAT_VERSION = 1


@dataclass
class RgprModel:
    net: ReluNet
    post: GaussianPosterior
    kernel: LayeredDscsParams

    def __post_init__(self):
        if len(self.kernel) != self.net.n_representations:
            raise DimensionMismatch(
                f"kernel has {len(self.kernel)} layers, net has "
                f"{self.net.n_representations} representations"
            )

    def with_kernel(self, kernel: LayeredDscsParams) -> "RgprModel":
        return RgprModel(self.net, self.post, kernel)


def rgpr_predictive(model: RgprModel, x) -> PredictiveGaussian:
    base = linearized_predictive(model.net, model.post, x)
    acts = forward(model.net, x).activations
    addend = layered_dscs_var(acts, model.kernel)
    return PredictiveGaussian(base.mean, base.cov, addend)


def _sample_logits(model: RgprModel, X, s, rng):
    """Logits under ``s`` posterior draws and the matching RGPR variances: (s, M, C), (s, M)."""
    net, post = model.net, model.post
    thetas = post.sample(rng, size=s)
    if post.subset == "last_layer":
        acts = forward(net, X).activations
        var = np.broadcast_to(layered_dscs_var(acts, model.kernel), (s, len(X)))
        C = net.n_outputs
        W = thetas[:, : -C].reshape(s, C, -1)
        b = thetas[:, -C:]
        logits = np.einsum("mh,sch->smc", acts[-1], W) + b[:, None, :]
        return logits, var
    logits = np.empty((s, len(X), net.n_outputs))
    var = np.empty((s, len(X)))
    for i, theta in enumerate(thetas):
        trace = forward(net.with_params(theta, "all"), X)
        logits[i] = trace.logits
        var[i] = layered_dscs_var(trace.activations, model.kernel)
    return logits, var


def mc_predict(model: RgprModel, x, s: int, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo predictive probabilities averaged over ``s`` samples.

    Each sample draws parameters from the posterior, runs the network, and adds
    ``N(0, v_s(x) I)`` noise with ``v_s`` the layered DSCS variance of that
    sample's representations.
    """
    if s < 1:
        raise ValueError("need at least one sample")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    logits, var = _sample_logits(model, X, s, rng)
    noise = rng.standard_normal(logits.shape) * np.sqrt(var)[..., None]
    probs = softmax(logits + noise).mean(axis=0)
    return probs[0] if single else probs


def confidence(p) -> np.ndarray:
    return np.max(np.asarray(p), axis=-1)


def save_model(path, net: ReluNet, post: GaussianPosterior, meta: dict | None = None):
    """Network and posterior in one versioned JSON container."""
    record = {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "net": net.to_dict(),
        "posterior": post.to_dict(),
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(record, fh, sort_keys=True)


def load_model(path):
    """Returns ``(net, posterior, meta)``."""
    with open(path) as fh:
        record = json.load(fh)
    if record.get("format") != MODEL_FORMAT or record.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} v{FORMAT_VERSION} file")
    return (
        ReluNet.from_dict(record["net"]),
        GaussianPosterior.from_dict(record["posterior"]),
        record.get("meta", {}),
    )


def save_sigmas(path, kernel: LayeredDscsParams, extra: dict | None = None):
    record = {
        "format": SIGMAS_FORMAT,
        "version": FORMAT_VERSION,
        "sigma2": list(kernel.sigma2_per_layer),
    }
    if extra:
        record["info"] = extra
    with open(path, "w") as fh:
        json.dump(record, fh, sort_keys=True)


def load_sigmas(path) -> LayeredDscsParams:
    with open(path) as fh:
        record = json.load(fh)
    if record.get("format") != SIGMAS_FORMAT or record.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: not a {SIGMAS_FORMAT} v{FORMAT_VERSION} file")
    return LayeredDscsParams(tuple(record["sigma2"]))
