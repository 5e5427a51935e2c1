"""Scikit-learn compatible wrappers around the reconstruction pipelines.

These estimators follow sklearn conventions (rows are samples, parameters
set in __init__, learned attributes end in an underscore, get_params/clone
work) so the reconstructors compose with pipelines and model-selection
tooling. Internally they delegate to the column-layout core functions.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import InvalidParameterError
from .gmm import KMEANS, PatchGmm
from .inversion import NoisePrecision, build_cache, invert_blocks
from .sparse import IstaConfig, lipschitz_constant, make_dictionary, solve_block_sparse
from .validation import as_matrix, sensing_entries


class GmmBlockReconstructor(BaseEstimator, TransformerMixin):
    """Closed-form block reconstructor with a Gaussian-mixture patch prior.

    fit(X) trains the prior on patch rows (n_patches, block_dim) unless a
    pre-trained ``model`` is supplied, then precomputes the posterior cache
    for the given pattern matrix and noise level. transform(Y) maps
    measurement rows (n_blocks, n_measurements) to reconstructed block rows
    (n_blocks, block_dim).
    """

    def __init__(self, sensing_matrix=None, noise_sigma=0.0, model=None,
                 n_components=20, max_iter=200, tol=1e-6, reg_covar=None,
                 seed=0, init=KMEANS):
        self.sensing_matrix = sensing_matrix
        self.noise_sigma = noise_sigma
        self.model = model
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.reg_covar = reg_covar
        self.seed = seed
        self.init = init

    def fit(self, X=None, y=None):
        if self.sensing_matrix is None:
            raise InvalidParameterError("sensing_matrix is required")
        if self.model is not None:
            self.model_ = self.model
        else:
            if X is None:
                raise InvalidParameterError(
                    "fit needs training patches when no pre-trained model is given"
                )
            est = PatchGmm(
                n_components=self.n_components,
                max_iter=self.max_iter,
                tol=self.tol,
                reg_covar=self.reg_covar,
                seed=self.seed,
                init=self.init,
            ).fit(as_matrix(X, name="patches"))
            self.model_ = est.model_
        entries = sensing_entries(self.sensing_matrix)
        precision = NoisePrecision.from_sigma(self.noise_sigma, entries.shape[0])
        self.cache_ = build_cache(self.sensing_matrix, precision, self.model_)
        return self

    def transform(self, Y):
        if not hasattr(self, "cache_"):
            raise InvalidParameterError("estimator is not fitted")
        rows = as_matrix(Y, name="measurements")
        means, _ = invert_blocks(rows.T, self.cache_)
        return means.T

    def responsibilities(self, Y):
        """Posterior component weights per measurement row, (n_blocks, K)."""
        if not hasattr(self, "cache_"):
            raise InvalidParameterError("estimator is not fitted")
        rows = as_matrix(Y, name="measurements")
        _, resp = invert_blocks(rows.T, self.cache_)
        return resp.T


class IstaBlockReconstructor(BaseEstimator, TransformerMixin):
    """Sparse-coding block reconstructor (l1 baseline) with the same row API."""

    def __init__(self, sensing_matrix=None, dictionary="dct2d", lam=0.01,
                 max_iter=2000, tol=1e-8, accelerated=True):
        self.sensing_matrix = sensing_matrix
        self.dictionary = dictionary
        self.lam = lam
        self.max_iter = max_iter
        self.tol = tol
        self.accelerated = accelerated

    def fit(self, X=None, y=None):
        if self.sensing_matrix is None:
            raise InvalidParameterError("sensing_matrix is required")
        entries = sensing_entries(self.sensing_matrix)
        self.dictionary_ = make_dictionary(self.dictionary, entries.shape[1])
        self.lipschitz_ = lipschitz_constant(entries @ self.dictionary_.d)
        return self

    def _config(self):
        return IstaConfig(
            lam=self.lam,
            max_iters=self.max_iter,
            tol=self.tol,
            accelerated=self.accelerated,
        )

    def transform(self, Y):
        if not hasattr(self, "dictionary_"):
            raise InvalidParameterError("estimator is not fitted")
        rows = as_matrix(Y, name="measurements")
        cfg = self._config()
        out = np.empty((rows.shape[0], self.dictionary_.block_dim))
        for i in range(rows.shape[0]):
            result = solve_block_sparse(
                rows[i], self.sensing_matrix, self.dictionary_, cfg,
                lipschitz=self.lipschitz_,
            )
            out[i] = result.block
        return out
