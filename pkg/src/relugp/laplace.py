"""Gaussian posteriors over network parameters and the linearized predictive."""

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import DimensionMismatch
from .network import ReluNet, forward, jacobian, softmax

POSTERIOR_FORMAT = "relugp.posterior"
POSTERIOR_VERSION = 1
_CHUNK = 256


@dataclass
class GaussianPosterior:
    """N(mean, cov) over the ``subset`` parameters.

    ``cov`` is a full matrix for ``last_layer`` and a vector of variances for
    ``all`` (diagonal approximation).
    """

    subset: str
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        P = self.mean.size
        if self.subset == "last_layer":
            if self.cov.shape != (P, P):
                raise DimensionMismatch(f"full covariance must be {P}x{P}")
        elif self.subset == "all":
            if self.cov.shape != (P,):
                raise DimensionMismatch(f"diagonal covariance must have {P} entries")
        else:
            raise ValueError(f"unknown subset {self.subset!r}")

    @property
    def is_diagonal(self):
        return self.cov.ndim == 1

    def scaled(self, factor: float) -> "GaussianPosterior":
        return GaussianPosterior(self.subset, self.mean, factor * self.cov)

    def sample(self, rng, size=None):
        return numerics.sample_gaussian(rng, self.mean, self.cov, size)

    def to_dict(self):
        return {
            "format": POSTERIOR_FORMAT,
            "version": POSTERIOR_VERSION,
            "subset": self.subset,
            "mean": self.mean.tolist(),
            "cov": self.cov.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != POSTERIOR_FORMAT or d.get("version") != POSTERIOR_VERSION:
            raise ValueError(f"not a {POSTERIOR_FORMAT} v{POSTERIOR_VERSION} record")
        mean = np.asarray(d["mean"], dtype=np.float64)
        cov = np.asarray(d["cov"], dtype=np.float64)
        if d["subset"] == "last_layer":
            cov = cov.reshape(mean.size, mean.size)
        return cls(d["subset"], mean, cov)


@dataclass
class PredictiveGaussian:
    """Gaussian over the C outputs; effective covariance is ``cov + rgpr_addend * I``.

    Fields may carry a leading batch dimension: mean (M, C), cov (M, C, C),
    rgpr_addend (M,).
    """

    mean: np.ndarray
    cov: np.ndarray
    rgpr_addend: np.ndarray | float = 0.0

    def variances(self):
        """Per-class marginal variances including the RGPR addend."""
        diag = np.diagonal(self.cov, axis1=-2, axis2=-1)
        return diag + np.asarray(self.rgpr_addend)[..., None]

    def effective_cov(self):
        C = self.mean.shape[-1]
        return self.cov + np.asarray(self.rgpr_addend)[..., None, None] * np.eye(C)


def output_curvature(logits, task: str):
    """Per-point Hessian of the NLL w.r.t. the outputs: (M, C, C)."""
    if task == "classification":
        p = softmax(logits)
        return np.einsum("mc,cd->mcd", p, np.eye(p.shape[1])) - p[:, :, None] * p[:, None, :]
    M, C = logits.shape
    return np.broadcast_to(np.eye(C), (M, C, C))


def ggn_precision(net: ReluNet, X, task: str, prior_precision: float, subset: str,
                  diagonal: bool = False) -> np.ndarray:
    """Generalized Gauss-Newton precision ``sum_m J_m^T Lambda_m J_m + lambda I``.

    With ``diagonal=True`` only the diagonal is formed (a vector).
    """
    P = net.n_params(subset)
    prec = np.zeros(P) if diagonal else np.zeros((P, P))
    X = np.asarray(X, dtype=np.float64).reshape(-1, net.n_inputs)
    for start in range(0, len(X), _CHUNK):
        xb = X[start:start + _CHUNK]
        J = jacobian(net, xb, subset)
        lam = output_curvature(forward(net, xb).logits, task)
        LJ = lam @ J
        if diagonal:
            prec += np.einsum("mcp,mcp->p", J, LJ)
        else:
            prec += np.einsum("mcp,mcq->pq", J, LJ)
    if diagonal:
        return prec + prior_precision
    prec = 0.5 * (prec + prec.T)
    return prec + prior_precision * np.eye(P)


def fit_laplace(net: ReluNet, data, prior_precision: float = 1e-2,
                subset: str = "last_layer") -> GaussianPosterior:
    """Laplace posterior around the current (MAP) parameters.

    ``last_layer`` inverts the full GGN precision of the output layer;
    ``all`` keeps the reciprocal diagonal of the all-parameter GGN.
    """
    if prior_precision <= 0:
        raise ValueError("prior_precision must be positive")
    diagonal = subset == "all"
    prec = ggn_precision(net, data.inputs, data.task, prior_precision, subset, diagonal)
    mean = net.get_params(subset)
    if diagonal:
        return GaussianPosterior(subset, mean, 1.0 / prec)
    return GaussianPosterior(subset, mean, numerics.inv_spd(prec))


def linearized_predictive(net: ReluNet, post: GaussianPosterior, x) -> PredictiveGaussian:
    """Output Gaussian ``N(f_mu(x), J Sigma J^T)`` from linearizing at the posterior mean."""
    if post.mean.size != net.n_params(post.subset):
        raise DimensionMismatch("posterior does not match the network's parameter subset")
    x = np.asarray(x, dtype=np.float64)
    J = jacobian(net, x, post.subset)
    mean = forward(net, x).logits
    if post.is_diagonal:
        cov = np.einsum("...cp,p,...dp->...cd", J, post.cov, J)
    else:
        cov = J @ post.cov @ np.swapaxes(J, -1, -2)
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    return PredictiveGaussian(mean, cov, np.zeros(mean.shape[:-1]))


def probit_predict(pred: PredictiveGaussian) -> np.ndarray:
    """Generalized probit: ``softmax(m_i * (1 + pi/8 v_ii)^(-1/2))``."""
    kappa = 1.0 / np.sqrt(1.0 + math.pi / 8.0 * pred.variances())
    return softmax(pred.mean * kappa)
