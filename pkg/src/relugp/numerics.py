"""Dense linear algebra and random number helpers.

All matrices are C-ordered (row-major) float64 numpy arrays. Randomness always
flows through an explicit :class:`numpy.random.Generator`; nothing touches the
global numpy state.
"""

import numpy as np
import scipy.linalg as sla

from .errors import NotPositiveDefinite

JITTER_START = 1e-10
JITTER_RETRIES = 3


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic PCG64 generator for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(np.uint64(seed)))


def split_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child generators for parallel work, derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _check_symmetric(a):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotPositiveDefinite(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > 1e-10 * scale:
        raise NotPositiveDefinite("matrix is not symmetric")


def cholesky(a) -> np.ndarray:
    """Lower Cholesky factor with an escalating diagonal jitter fallback.

    The plain factorization is tried first. On failure, ``1e-10 * mean(diag)``
    is added to the diagonal and the attempt repeated up to three times,
    multiplying the jitter by ten each time.

    Raises
    ------
    NotPositiveDefinite
        If ``a`` is not symmetric or every attempt fails.
    """
    a = np.asarray(a, dtype=np.float64)
    _check_symmetric(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass

    base = float(np.mean(np.diag(a)))
    jitter = JITTER_START * base
    eye = np.eye(a.shape[0])
    for _ in range(JITTER_RETRIES):
        if jitter > 0:
            try:
                return np.linalg.cholesky(a + jitter * eye)
            except np.linalg.LinAlgError:
                pass
        jitter *= 10.0
    raise NotPositiveDefinite("matrix is not positive definite after jitter")


def cho_solve(chol, b) -> np.ndarray:
    return sla.cho_solve((chol, True), b, check_finite=False)


def solve_spd(a, b) -> np.ndarray:
    return cho_solve(cholesky(a), b)


def inv_spd(a) -> np.ndarray:
    chol = cholesky(a)
    out = cho_solve(chol, np.eye(chol.shape[0]))
    return 0.5 * (out + out.T)


def sample_gaussian(rng: np.random.Generator, mean, cov, size=None) -> np.ndarray:
    """Draw from N(mean, cov).

    ``cov`` may be a full matrix, a vector holding a diagonal, or a scalar
    multiple of the identity. With ``size`` given, returns ``size`` stacked draws.
    A zero covariance returns ``mean`` exactly without consuming randomness.
    """
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    shape = mean.shape if size is None else (size,) + mean.shape

    if not np.any(cov):
        return np.broadcast_to(mean, shape).copy()

    if cov.ndim == 2:
        z = rng.standard_normal(shape)
        return mean + z @ cholesky(cov).T

    if np.any(cov < 0):
        raise NotPositiveDefinite("negative variance in diagonal covariance")
    z = rng.standard_normal(shape)
    return mean + z * np.sqrt(cov)
