"""Closed-form per-block Bayesian reconstruction under the mixture prior.

For a linear measurement y = A x + noise with Gaussian noise of precision R
and a Gaussian-mixture prior on x, the posterior is again a Gaussian mixture
with component posterior covariances (A' R A + Sigma_k^-1)^-1, component
means driven linearly by y, and posterior component weights given by the
marginal likelihoods N(y | A mu_k, R^-1 + A Sigma_k A'). The block estimate
is the posterior mean.

Everything that depends only on (A, R, model) is factorized once into a
PosteriorCache; per-block inversion then needs no factorization and no
iteration: one cached triangular solve per component for the responsibility
weights plus one cached gain multiply for the means.

Convention flag: R is the noise PRECISION matrix (inverse covariance). The
default built from a noise level sigma is (1/sigma^2) * I; a zero sigma is
substituted by sigma_eff = 1e-6 so R stays finite.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import DimensionMismatchError, InvalidParameterError, NumericalError
from .image import stitch_blocks
from .validation import as_matrix, as_vector, check_symmetric, sensing_entries
from .gmm import LOG_2PI

SIGMA_EFF_FLOOR = 1e-6
_CHUNK = 1024  # fixed block-column chunk; independent of worker count


@dataclass(frozen=True)
class NoisePrecision:
    """SPD precision matrix of the measurement noise (inverse covariance)."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = as_matrix(self.matrix, name="noise precision")
        if mat.shape[0] != mat.shape[1]:
            raise DimensionMismatchError(
                f"noise precision must be square, got {mat.shape}"
            )
        check_symmetric(mat, name="noise precision")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def n_measurements(self):
        return self.matrix.shape[0]

    @classmethod
    def from_sigma(cls, sigma, n_measurements):
        """Isotropic precision (1/sigma^2) I; sigma=0 maps to sigma_eff=1e-6."""
        if sigma < 0:
            raise InvalidParameterError(f"sigma must be >= 0, got {sigma}")
        sigma_eff = sigma if sigma > 0 else SIGMA_EFF_FLOOR
        return cls(matrix=np.eye(n_measurements) / (sigma_eff * sigma_eff))


@dataclass(frozen=True)
class PosteriorResult:
    """Posterior mean of one block plus the component responsibilities."""

    mean: np.ndarray
    responsibilities: np.ndarray


@dataclass(frozen=True)
class PosteriorCache:
    """Quantities precomputed once per (pattern matrix, noise precision, model).

    Component-stacked arrays (K first): posterior covariances and their
    Cholesky factors, Cholesky factors of the marginal measurement
    covariances, marginal means A mu_k, log prior weights, and the linear
    gain/offset pair mapping a measurement vector to each component's
    posterior mean. ``at_r`` is the shared A' R.
    """

    sigma_tilde: np.ndarray          # (K, P, P)
    sigma_tilde_chol: np.ndarray     # (K, P, P)
    marginal_chol: np.ndarray        # (K, M, M)
    marginal_mean: np.ndarray        # (K, M)
    log_weight_norm: np.ndarray      # (K,) log pi_k - 0.5 M log 2pi - log det L_k
    gain: np.ndarray                 # (K, P, M)
    offset: np.ndarray               # (K, P)
    at_r: np.ndarray                 # (P, M)

    @property
    def n_components(self):
        return self.marginal_mean.shape[0]

    @property
    def n_measurements(self):
        return self.marginal_mean.shape[1]

    @property
    def block_dim(self):
        return self.gain.shape[1]


def _chol_with_jitter(mat, what):
    """Cholesky factor, retrying once with a trace-scaled jitter."""
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * float(np.trace(mat)) / mat.shape[0]
        try:
            return np.linalg.cholesky(mat + jitter * np.eye(mat.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"factorization failed for {what}") from exc


def _spd_inverse(chol_lower):
    """Inverse of an SPD matrix from its lower Cholesky factor."""
    eye = np.eye(chol_lower.shape[0])
    half = solve_triangular(chol_lower, eye, lower=True, check_finite=False)
    return half.T @ half


def build_cache(a, r, model):
    """Precompute all per-component factorizations for iteration-free inversion."""
    entries = sensing_entries(a)
    m, p = entries.shape
    if p != model.dim:
        raise DimensionMismatchError(
            f"pattern dimension {p} does not match model dimension {model.dim}"
        )
    if r.matrix.shape != (m, m):
        raise DimensionMismatchError(
            f"noise precision must be {(m, m)}, got {r.matrix.shape}"
        )
    k = model.n_components
    at_r = entries.T @ r.matrix
    r_inv = _spd_inverse(_chol_with_jitter(r.matrix, "noise precision"))
    gram = at_r @ entries  # A' R A, shared across components

    sigma_tilde = np.empty((k, p, p))
    sigma_tilde_chol = np.empty((k, p, p))
    marginal_chol = np.empty((k, m, m))
    marginal_mean = np.empty((k, m))
    log_weight_norm = np.empty(k)
    gain = np.empty((k, p, m))
    offset = np.empty((k, p))

    for j in range(k):
        cov = model.covariances[j]
        prior_chol = _chol_with_jitter(cov, f"prior covariance of component {j}")
        prior_inv = _spd_inverse(prior_chol)

        posterior_precision = gram + prior_inv
        posterior_precision = 0.5 * (posterior_precision + posterior_precision.T)
        prec_chol = _chol_with_jitter(
            posterior_precision, f"posterior precision of component {j}"
        )
        st = _spd_inverse(prec_chol)
        st = 0.5 * (st + st.T)
        sigma_tilde[j] = st
        sigma_tilde_chol[j] = _chol_with_jitter(
            st, f"posterior covariance of component {j}"
        )

        marginal_cov = r_inv + entries @ cov @ entries.T
        marginal_cov = 0.5 * (marginal_cov + marginal_cov.T)
        lc = _chol_with_jitter(marginal_cov, f"marginal covariance of component {j}")
        marginal_chol[j] = lc
        marginal_mean[j] = entries @ model.means[j]
        log_weight_norm[j] = (
            float(np.log(model.weights[j]))
            - 0.5 * m * LOG_2PI
            - float(np.sum(np.log(np.diagonal(lc))))
        )
        gain[j] = st @ at_r
        offset[j] = st @ (prior_inv @ model.means[j])

    return PosteriorCache(
        sigma_tilde=sigma_tilde,
        sigma_tilde_chol=sigma_tilde_chol,
        marginal_chol=marginal_chol,
        marginal_mean=marginal_mean,
        log_weight_norm=log_weight_norm,
        gain=gain,
        offset=offset,
        at_r=at_r,
    )


def _check_model(cache, model):
    if model is not None and (
        model.n_components != cache.n_components or model.dim != cache.block_dim
    ):
        raise DimensionMismatchError("model does not match the posterior cache")


def invert_blocks(measurements, cache):
    """Invert many blocks at once.

    ``measurements`` is (n_measurements, n_blocks); returns the posterior
    means (block_dim, n_blocks) and responsibilities (K, n_blocks). Uses
    only cached factors: no factorization happens here.
    """
    y = as_matrix(measurements, name="measurements")
    if y.shape[0] != cache.n_measurements:
        raise DimensionMismatchError(
            f"measurements have {y.shape[0]} rows, cache expects {cache.n_measurements}"
        )
    k = cache.n_components
    n = y.shape[1]
    log_w = np.empty((k, n))
    for j in range(k):
        z = solve_triangular(
            cache.marginal_chol[j],
            y - cache.marginal_mean[j][:, None],
            lower=True,
            check_finite=False,
        )
        log_w[j] = cache.log_weight_norm[j] - 0.5 * np.sum(z * z, axis=0)
    log_total = logsumexp(log_w, axis=0)
    resp = np.exp(log_w - log_total)
    means = np.zeros((cache.block_dim, n))
    for j in range(k):
        means += resp[j] * (cache.gain[j] @ y + cache.offset[j][:, None])
    return means, resp


def invert_block(y, cache, model=None):
    """Posterior mean and responsibilities for a single measurement vector."""
    _check_model(cache, model)
    y = as_vector(y, length=cache.n_measurements, name="measurement vector")
    means, resp = invert_blocks(y[:, None], cache)
    return PosteriorResult(mean=means[:, 0], responsibilities=resp[:, 0])


def _invert_chunked(y, cache, workers):
    """Chunked inversion with a fixed chunk size, so the per-column results
    are bit-identical for any worker count."""
    n = y.shape[1]
    means = np.empty((cache.block_dim, n))
    resp = np.empty((cache.n_components, n))
    starts = range(0, n, _CHUNK)

    def run(start):
        stop = min(start + _CHUNK, n)
        means[:, start:stop], resp[:, start:stop] = invert_blocks(y[:, start:stop], cache)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    else:
        for start in starts:
            run(start)
    return means, resp


def reconstruct_blocks(ms, cache, workers=1):
    """Posterior-mean blocks and responsibilities for a whole MeasurementSet."""
    return _invert_chunked(ms.data, cache, workers)


def reconstruct_image(ms, cache, model=None, grid=None, workers=1):
    """Invert every block of a MeasurementSet and stitch the image.

    Per-block inversions are independent; the output does not depend on the
    processing order or on ``workers``. The returned image is not clamped.
    """
    _check_model(cache, model)
    grid = grid if grid is not None else ms.grid
    if grid.block_dim != cache.block_dim:
        raise DimensionMismatchError(
            f"grid block dimension {grid.block_dim} does not match cache "
            f"dimension {cache.block_dim}"
        )
    if ms.data.shape[1] != grid.n_blocks:
        raise DimensionMismatchError(
            f"measurement set has {ms.data.shape[1]} blocks, grid expects {grid.n_blocks}"
        )
    means, _ = _invert_chunked(ms.data, cache, workers)
    return stitch_blocks(means, grid)
