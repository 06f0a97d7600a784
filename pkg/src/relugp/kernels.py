"""ReLU feature maps and the cubic-spline kernel family.

A Bayesian linear model over ``D`` regularly spaced ReLU features, with weight
variance ``sigma2 * (c_max - c_min) / D``, has a covariance that converges to
the cubic spline kernel as ``D`` grows. Mirroring that kernel about the origin
and adding both halves gives the double-sided cubic spline (DSCS) kernel, which
vanishes near zero and grows cubically in ``|x|``.

Every function broadcasts over numpy arrays; the multivariate kernels reduce
over the last axis.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidRange


def relu_feature(z, c):
    """Shifted ReLU ``max(0, z - c)`` with its kink at ``c``."""
    return np.maximum(0.0, np.subtract(z, c))


def cov_finite(x, x_prime, d: int, c_min: float, c_max: float, sigma2: float = 1.0):
    """Covariance of ``w . phi(x)`` under ``d`` ReLU features on ``[c_min, c_max]``.

    Kinks sit at ``c_i = c_min + (i-1)/(d-1) * (c_max - c_min)`` and the weight
    prior is isotropic with variance ``sigma2 * (c_max - c_min) / d``. Only used
    as a Riemann-sum check on :func:`cubic_spline_1d`.
    """
    if d < 2:
        raise InvalidRange("need at least two features")
    if not c_min < c_max:
        raise InvalidRange(f"c_min={c_min} must be below c_max={c_max}")
    centers = np.linspace(c_min, c_max, d)
    x = np.asarray(x, dtype=np.float64)[..., None]
    xp = np.asarray(x_prime, dtype=np.float64)[..., None]
    total = np.sum(relu_feature(x, centers) * relu_feature(xp, centers), axis=-1)
    return sigma2 * (c_max - c_min) / d * total


def cubic_spline_1d(x, x_prime, c_min: float = 0.0, sigma2: float = 1.0):
    """One-sided cubic spline kernel in the ``c_max -> inf`` limit.

    Zero whenever ``min(x, x') <= c_min``.
    """
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(x_prime, dtype=np.float64)
    xbar = np.minimum(x, xp)
    val = (
        (xbar**3 - c_min**3) / 3.0
        - 0.5 * (xbar**2 - c_min**2) * (x + xp)
        + (xbar - c_min) * (x * xp)
    )
    return sigma2 * np.where(xbar > c_min, val, 0.0)


def dscs_1d(x, x_prime, sigma2: float = 1.0):
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(x_prime, dtype=np.float64)
    return cubic_spline_1d(x, xp, 0.0, sigma2) + cubic_spline_1d(-x, -xp, 0.0, sigma2)


def dscs_multi(x, x_prime, sigma2: float = 1.0):
    """DSCS kernel on vectors: per-dimension 1-D kernels averaged over the last axis.

    A sum (not a product) keeps the kernel non-zero wherever any single
    coordinate is away from the origin.
    """
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(x_prime, dtype=np.float64)
    if x.shape[-1:] != xp.shape[-1:]:
        raise DimensionMismatch(f"input dims differ: {x.shape} vs {xp.shape}")
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionMismatch("need at least one input dimension")
    return np.mean(dscs_1d(x, xp, sigma2), axis=-1)


def dscs_diag(x, sigma2: float = 1.0):
    """``dscs_multi(x, x)`` in closed form: ``sigma2 * mean(|x|^3) / 3``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionMismatch("need at least one input dimension")
    return sigma2 * np.mean(np.abs(x) ** 3, axis=-1) / 3.0


def dscs_gram(a, b, sigma2: float = 1.0):
    """Cross-covariance matrix between the rows of ``a`` (M, N) and ``b`` (K, N)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    return dscs_multi(a[:, None, :], b[None, :, :], sigma2)


@dataclass(frozen=True)
class LayeredDscsParams:
    """Per-representation kernel variances, input space first.

    A zero entry switches that layer's kernel off (e.g. an input-only prior).
    """

    sigma2_per_layer: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.sigma2_per_layer)
        if not vals:
            raise InvalidRange("need at least one layer variance")
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise InvalidRange(f"layer variances must be finite and >= 0: {vals}")
        object.__setattr__(self, "sigma2_per_layer", vals)

    def __len__(self):
        return len(self.sigma2_per_layer)

    @classmethod
    def uniform(cls, n_layers: int, sigma2: float = 1.0):
        return cls((sigma2,) * n_layers)

    @classmethod
    def input_only(cls, n_layers: int, sigma2: float = 1.0):
        return cls((sigma2,) + (0.0,) * (n_layers - 1))


def layer_kernel_terms(activations) -> np.ndarray:
    """Unit-variance DSCS self-covariance of each representation.

    Returns shape ``(L, ...)``; the layered variance is then a dot product with
    the per-layer ``sigma2`` vector.
    """
    return np.stack([dscs_diag(h, 1.0) for h in activations])


def layered_dscs_var(activations, params: LayeredDscsParams):
    """Prior variance of the additive GP over all representations of one input.

    ``activations`` is ``[h0, h1, ..., h_{L-1}]`` with ``h0`` the raw input.
    Arrays may carry leading batch dimensions.
    """
    if len(activations) != len(params):
        raise DimensionMismatch(
            f"{len(activations)} representations but {len(params)} layer variances"
        )
    sig = np.asarray(params.sigma2_per_layer)
    terms = layer_kernel_terms(activations)
    return np.tensordot(sig, terms, axes=1)
