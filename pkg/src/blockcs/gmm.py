"""Gaussian mixture prior over vectorized image patches.

The mixture is trained with EM on raw intensities in [0, 1]; no DC removal
or whitening is applied, the component means absorb any DC. Covariances are
regularized by adding ``reg_covar * I`` after every M-step, which keeps all
factorizations well posed. The recorded training log-likelihood is the mean
log-density per patch, so its convergence/monotonicity behaviour does not
depend on corpus size.
"""

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .errors import (
    DimensionMismatchError,
    FormatError,
    InvalidParameterError,
    NumericalError,
    TooFewPatchesError,
)
from .validation import as_matrix, as_vector, check_seed

LOG_2PI = math.log(2.0 * math.pi)

KMEANS = "kmeans"
RANDOM_RESPONSIBILITY = "random-responsibility"
INIT_KINDS = (KMEANS, RANDOM_RESPONSIBILITY)

_INIT_STREAM = 3  # SeedSequence domain tag for initialization draws


@dataclass(frozen=True)
class GmmModel:
    """Immutable trained mixture: weights (K,), means (K, P), covariances (K, P, P)."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        weights = as_vector(self.weights, name="weights")
        means = as_matrix(self.means, name="means")
        covs = np.asarray(self.covariances, dtype=np.float64)
        if covs.ndim != 3:
            raise DimensionMismatchError(
                f"covariances must be (K, P, P), got shape {covs.shape}"
            )
        k, p = means.shape
        if weights.shape != (k,) or covs.shape != (k, p, p):
            raise DimensionMismatchError(
                "inconsistent mixture shapes: "
                f"weights {weights.shape}, means {means.shape}, covariances {covs.shape}"
            )
        for arr in (weights, means, covs):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def validate(self, eigenvalue_floor=None):
        """Check the mixture invariants; raises InvalidParameterError on violation."""
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise InvalidParameterError("component weights must sum to 1")
        if np.any(self.weights <= 0.0):
            raise InvalidParameterError("component weights must be positive")
        for k in range(self.n_components):
            cov = self.covariances[k]
            if float(np.abs(cov - cov.T).max()) > 1e-12:
                raise InvalidParameterError(f"covariance {k} is not symmetric")
            eigmin = float(np.linalg.eigvalsh(cov)[0])
            floor = 0.0 if eigenvalue_floor is None else eigenvalue_floor * (1.0 - 1e-6)
            if eigmin < floor or eigmin <= 0.0:
                raise InvalidParameterError(
                    f"covariance {k} has smallest eigenvalue {eigmin:.3e}, "
                    f"below the required floor"
                )
        return self


@dataclass(frozen=True)
class TrainingConfig:
    """EM settings. ``eps_reg=None`` resolves to 1e-6 * mean pixel variance."""

    k: int = 20
    max_iters: int = 200
    tol: float = 1e-6
    eps_reg: float | None = None
    seed: int = 0
    init: str = KMEANS


def _chol(cov, component):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"covariance of component {component} is not positive definite"
        ) from exc


def _log_densities(x_rows, means, chols):
    """Per-sample, per-component Gaussian log-densities, (n, K)."""
    n, p = x_rows.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for j in range(k):
        z = solve_triangular(chols[j], (x_rows - means[j]).T, lower=True, check_finite=False)
        logdet_half = float(np.sum(np.log(np.diagonal(chols[j]))))
        out[:, j] = -0.5 * (p * LOG_2PI + np.sum(z * z, axis=0)) - logdet_half
    return out


def _kmeans_labels(x_rows, k, rng, max_iter=100):
    """Seeded k-means++ plus Lloyd iterations; returns hard labels."""
    n, p = x_rows.shape
    x_sq = np.sum(x_rows * x_rows, axis=1)
    centers = np.empty((k, p))
    centers[0] = x_rows[int(rng.integers(n))]
    d2 = np.maximum(x_sq - 2.0 * x_rows @ centers[0] + centers[0] @ centers[0], 0.0)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            centers[j:] = centers[0]
            break
        centers[j] = x_rows[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(
            d2, np.maximum(x_sq - 2.0 * x_rows @ centers[j] + centers[j] @ centers[j], 0.0)
        )
    labels = None
    for _ in range(max_iter):
        dist = x_sq[:, None] - 2.0 * x_rows @ centers.T + np.sum(centers * centers, axis=1)
        new_labels = dist.argmin(axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = x_rows[mask].mean(axis=0)
            else:
                centers[j] = x_rows[int(dist.min(axis=1).argmax())]
    return labels


class PatchGmm(BaseEstimator):
    """Scikit-learn style estimator for the patch mixture.

    fit(X) expects patches as rows, shape (n_patches, patch_dim). After
    fitting, ``model_`` holds the frozen GmmModel, ``log_likelihood_trace_``
    the per-iteration mean log-likelihood, and ``reg_covar_`` the resolved
    regularization.
    """

    def __init__(self, n_components=20, max_iter=200, tol=1e-6, reg_covar=None,
                 seed=0, init=KMEANS):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.reg_covar = reg_covar
        self.seed = seed
        self.init = init

    def _initial_responsibilities(self, x_rows):
        n = x_rows.shape[0]
        k = self.n_components
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([check_seed(self.seed), _INIT_STREAM]))
        )
        if self.init == KMEANS:
            labels = _kmeans_labels(x_rows, k, rng)
            resp = np.zeros((n, k))
            resp[np.arange(n), labels] = 1.0
        elif self.init == RANDOM_RESPONSIBILITY:
            resp = rng.random((n, k))
            resp /= resp.sum(axis=1, keepdims=True)
        else:
            raise InvalidParameterError(f"unknown init {self.init!r}")
        return resp

    def _m_step(self, x_rows, resp, reg):
        n, p = x_rows.shape
        k = resp.shape[1]
        nk = resp.sum(axis=0) + 10.0 * np.finfo(np.float64).tiny
        weights = nk / nk.sum()
        means = (resp.T @ x_rows) / nk[:, None]
        covs = np.empty((k, p, p))
        eye = np.eye(p)
        for j in range(k):
            centered = x_rows - means[j]
            cov = (centered * resp[:, j : j + 1]).T @ centered / nk[j]
            cov = 0.5 * (cov + cov.T) + reg * eye
            covs[j] = cov
        return weights, means, covs

    def fit(self, X, y=None):
        x_rows = as_matrix(X, name="patches")
        n, p = x_rows.shape
        k = int(self.n_components)
        if k < 1:
            raise InvalidParameterError(f"n_components must be >= 1, got {k}")
        if n < k:
            raise TooFewPatchesError(
                f"need at least {k} patches to fit {k} components, got {n}"
            )
        if self.reg_covar is None:
            reg = 1e-6 * float(np.var(x_rows, axis=0).mean())
            if reg <= 0.0:
                reg = 1e-12
        else:
            reg = float(self.reg_covar)
            if reg <= 0.0:
                raise InvalidParameterError(f"reg_covar must be > 0, got {reg}")

        resp = self._initial_responsibilities(x_rows)
        weights, means, covs = self._m_step(x_rows, resp, reg)

        trace = []
        converged = False
        prev_ll = None
        for _ in range(int(self.max_iter)):
            chols = [_chol(covs[j], j) for j in range(k)]
            weighted = _log_densities(x_rows, means, chols) + np.log(weights)
            log_norm = logsumexp(weighted, axis=1)
            ll = float(log_norm.mean())
            trace.append(ll)
            if prev_ll is not None and abs(ll - prev_ll) <= self.tol * max(abs(prev_ll), 1.0):
                converged = True
                break
            prev_ll = ll
            resp = np.exp(weighted - log_norm[:, None])
            weights, means, covs = self._m_step(x_rows, resp, reg)

        self.model_ = GmmModel(weights=weights, means=means, covariances=covs)
        self.model_.validate(eigenvalue_floor=reg)
        self.reg_covar_ = reg
        self.n_iter_ = len(trace)
        self.converged_ = converged
        self.log_likelihood_trace_ = np.asarray(trace)
        return self

    def score_samples(self, X):
        if not hasattr(self, "model_"):
            raise InvalidParameterError("estimator is not fitted")
        return score_samples(self.model_, X)


def train_gmm(patches, cfg=TrainingConfig()):
    """Fit the mixture on a (patch_dim, n_patches) block matrix (spec layout)."""
    patches = as_matrix(patches, name="patches")
    est = PatchGmm(
        n_components=cfg.k,
        max_iter=cfg.max_iters,
        tol=cfg.tol,
        reg_covar=cfg.eps_reg,
        seed=cfg.seed,
        init=cfg.init,
    )
    est.fit(patches.T)
    return est.model_


def score_samples(model, x_rows):
    """Mixture log-density of each row of ``x_rows`` under the model."""
    x_rows = as_matrix(x_rows, name="patches")
    if x_rows.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"patch dimension {x_rows.shape[1]} does not match model dimension {model.dim}"
        )
    chols = [_chol(model.covariances[j], j) for j in range(model.n_components)]
    weighted = _log_densities(x_rows, model.means, chols) + np.log(model.weights)
    return logsumexp(weighted, axis=1)


def log_likelihood(model, patch):
    """Mixture log-density of one vectorized patch."""
    patch = as_vector(patch, length=model.dim, name="patch")
    return float(score_samples(model, patch[None, :])[0])


# ---------------------------------------------------------------------------
# Model files: JSON header line + raw little-endian float64 payload holding
# weights, means, covariances back to back. The header carries a sha256 of
# the payload. No wall-clock metadata is written, so retraining with the
# same seeds reproduces the file byte for byte.
# ---------------------------------------------------------------------------

MODEL_FORMAT = "blockcs-gmm"
MODEL_VERSION = 1


def save_model(model, path, metadata=None):
    k, p = model.n_components, model.dim
    payload = b"".join(
        arr.astype("<f8").tobytes()
        for arr in (model.weights, model.means, model.covariances)
    )
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "k": k,
        "p": p,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "metadata": metadata or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
        fh.write(b"\n")
        fh.write(payload)


def load_model(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise FormatError(f"{path}: missing model header")
    try:
        header = json.loads(raw[:newline].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable model header") from exc
    if header.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a blockcs model file")
    if header.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {header.get('version')!r}")
    k, p = header["k"], header["p"]
    payload = raw[newline + 1 :]
    expected = (k + k * p + k * p * p) * 8
    if len(payload) != expected:
        raise FormatError(f"{path}: payload holds {len(payload)} bytes, need {expected}")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise FormatError(f"{path}: payload checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f8")
    weights = flat[:k].copy()
    means = flat[k : k + k * p].reshape(k, p).copy()
    covs = flat[k + k * p :].reshape(k, p, p).copy()
    model = GmmModel(weights=weights, means=means, covariances=covs)
    model.validate()
    return model
