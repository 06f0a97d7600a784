"""Blight-Ott style residual model: ``f~(x) = g(x)^T beta + f^(x)``.

``beta ~ N(0, B)`` and ``f^ ~ GP(0, k_dscs)``; targets carry Gaussian noise of
variance ``noise_var``. Unlike RGPR, the GP part is conditioned on the data. The
posterior is computed with the explicit-basis formulas (weights integrated out
in closed form):

    K_n   = K + noise_var I
    A     = B^-1 + G K_n^-1 G^T
    beta  = A^-1 G K_n^-1 y
    mean  = g*^T beta + k*^T K_n^-1 (y - G^T beta)
    r     = g* - G K_n^-1 k*
    var   = k** - k*^T K_n^-1 k* + r^T A^-1 r
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numerics
from .kernels import dscs_diag, dscs_gram
from .network import ReluNet, forward


@dataclass
class GpResidualModel:
    feature_fn: Callable
    prior_cov_b: np.ndarray
    kernel_sigma2: float
    noise_var: float
    train_inputs: np.ndarray
    train_targets: np.ndarray

    def __post_init__(self):
        self.prior_cov_b = np.atleast_2d(np.asarray(self.prior_cov_b, dtype=np.float64))
        self.train_inputs = np.atleast_2d(np.asarray(self.train_inputs, dtype=np.float64))
        self.train_targets = np.asarray(self.train_targets, dtype=np.float64).ravel()
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")
        if self.kernel_sigma2 < 0:
            raise ValueError("kernel_sigma2 must be non-negative")
        if len(self.train_inputs) == 0:
            raise ValueError("empty training set")


class BnoPosterior:
    """Factorized posterior of a :class:`GpResidualModel`; ``predict`` is cheap."""

    def __init__(self, model: GpResidualModel):
        self.model = model
        X, y = model.train_inputs, model.train_targets
        G = np.atleast_2d(model.feature_fn(X)).T  # (P, M)
        K = dscs_gram(X, X, model.kernel_sigma2)
        Kn = 0.5 * (K + K.T) + model.noise_var * np.eye(len(X))
        self._Kn_chol = numerics.cholesky(Kn)
        KinvGt = numerics.cho_solve(self._Kn_chol, G.T)  # (M, P)
        Binv = numerics.inv_spd(model.prior_cov_b)
        A = Binv + G @ KinvGt
        self._A_chol = numerics.cholesky(0.5 * (A + A.T))
        self.beta = numerics.cho_solve(self._A_chol, KinvGt.T @ y)
        self._alpha = numerics.cho_solve(self._Kn_chol, y - G.T @ self.beta)
        self._G = G

    def predict(self, x_star):
        """Posterior mean and variance of the latent ``f~`` at each row of ``x_star``."""
        m = self.model
        x_star = np.asarray(x_star, dtype=np.float64)
        single = x_star.ndim == 1
        Xs = np.atleast_2d(x_star)
        gs = np.atleast_2d(m.feature_fn(Xs))  # (S, P)
        ks = dscs_gram(m.train_inputs, Xs, m.kernel_sigma2)  # (M, S)
        kss = dscs_diag(Xs, m.kernel_sigma2)

        mean = gs @ self.beta + ks.T @ self._alpha
        v = numerics.cho_solve(self._Kn_chol, ks)  # K_n^-1 k*
        r = gs.T - self._G @ v  # (P, S)
        Ainv_r = numerics.cho_solve(self._A_chol, r)
        var = kss - np.sum(ks * v, axis=0) + np.sum(r * Ainv_r, axis=0)
        if single:
            return float(mean[0]), float(var[0])
        return mean, var


def bno_fit_predict(model: GpResidualModel, x_star):
    return BnoPosterior(model).predict(x_star)


def last_layer_features(net: ReluNet):
    """Feature map ``x -> [h_{L-1}(x), 1]``, i.e. the gradient of a linear output layer."""

    def g(X):
        h = forward(net, np.atleast_2d(X)).activations[-1]
        return np.hstack([h, np.ones((len(h), 1))])

    return g


def bno_from_net(net: ReluNet, data, kernel_sigma2: float = 1.0, noise_var: float = 0.01,
                 prior_precision: float = 1e-2) -> GpResidualModel:
    """Residual model on a trained regression net's last-layer features with B = I / prior_precision."""
    g = last_layer_features(net)
    P = net.weights[-1].shape[1] + 1
    return GpResidualModel(
        feature_fn=g,
        prior_cov_b=np.eye(P) / prior_precision,
        kernel_sigma2=kernel_sigma2,
        noise_var=noise_var,
        train_inputs=data.inputs,
        train_targets=data.targets,
    )
