import numpy as np
import pytest
from sklearn.base import clone

from blockcs import (
    GmmBlockReconstructor,
    InvalidParameterError,
    IstaBlockReconstructor,
    IstaConfig,
    NoisePrecision,
    build_cache,
    invert_blocks,
    make_dictionary,
    make_random_binary,
    solve_block_sparse,
)


class TestGmmBlockReconstructor:
    def test_pretrained_model_transform_matches_core(self, small_model):
        a = make_random_binary(5, small_model.dim, 2)
        est = GmmBlockReconstructor(
            sensing_matrix=a, noise_sigma=0.1, model=small_model
        ).fit()
        rng = np.random.default_rng(0)
        rows = rng.normal(size=(30, 5))
        got = est.transform(rows)
        cache = build_cache(a, NoisePrecision.from_sigma(0.1, 5), small_model)
        expected, _ = invert_blocks(rows.T, cache)
        assert np.array_equal(got, expected.T)

    def test_fit_trains_prior_when_no_model(self, small_corpus):
        a = make_random_binary(4, small_corpus.shape[0], 1)
        est = GmmBlockReconstructor(
            sensing_matrix=a, n_components=2, seed=0
        ).fit(small_corpus.T)
        rows = np.zeros((3, 4))
        out = est.transform(rows)
        assert out.shape == (3, small_corpus.shape[0])

    def test_responsibilities_rows_sum_to_one(self, small_model):
        a = make_random_binary(5, small_model.dim, 2)
        est = GmmBlockReconstructor(
            sensing_matrix=a, noise_sigma=0.1, model=small_model
        ).fit()
        rng = np.random.default_rng(1)
        resp = est.responsibilities(rng.normal(size=(10, 5)))
        assert resp.shape == (10, small_model.n_components)
        assert np.abs(resp.sum(axis=1) - 1.0).max() <= 1e-12

    def test_requires_sensing_matrix(self):
        with pytest.raises(InvalidParameterError):
            GmmBlockReconstructor().fit(np.zeros((10, 4)))

    def test_requires_patches_without_model(self):
        a = make_random_binary(2, 4, 0)
        with pytest.raises(InvalidParameterError):
            GmmBlockReconstructor(sensing_matrix=a).fit()

    def test_transform_requires_fit(self, small_model):
        est = GmmBlockReconstructor(sensing_matrix=None, model=small_model)
        with pytest.raises(InvalidParameterError):
            est.transform(np.zeros((2, 5)))

    def test_sklearn_clone(self, small_model):
        a = make_random_binary(5, small_model.dim, 2)
        est = GmmBlockReconstructor(sensing_matrix=a, noise_sigma=0.2, model=small_model)
        cloned = clone(est)
        assert cloned.get_params()["noise_sigma"] == 0.2


class TestIstaBlockReconstructor:
    def test_transform_matches_solver(self):
        p = 16
        a = make_random_binary(8, p, 3)
        est = IstaBlockReconstructor(
            sensing_matrix=a, dictionary="identity", lam=0.02,
            max_iter=500, accelerated=False,
        ).fit()
        rng = np.random.default_rng(2)
        rows = rng.normal(size=(4, 8))
        got = est.transform(rows)
        cfg = IstaConfig(lam=0.02, max_iters=500, tol=1e-8, accelerated=False)
        for i in range(rows.shape[0]):
            expected = solve_block_sparse(
                rows[i], a, make_dictionary("identity", p), cfg,
                lipschitz=est.lipschitz_,
            ).block
            assert np.array_equal(got[i], expected)

    def test_dct_dictionary_built_on_fit(self):
        a = make_random_binary(8, 16, 3)
        est = IstaBlockReconstructor(sensing_matrix=a, dictionary="dct2d").fit()
        assert est.dictionary_.d.shape == (16, 16)

    def test_requires_sensing_matrix(self):
        with pytest.raises(InvalidParameterError):
            IstaBlockReconstructor().fit()

    def test_transform_requires_fit(self):
        est = IstaBlockReconstructor(sensing_matrix=make_random_binary(2, 4, 0))
        with pytest.raises(InvalidParameterError):
            est.transform(np.zeros((1, 2)))
