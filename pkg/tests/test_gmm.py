import math
import time

import numpy as np
import pytest
from sklearn.base import clone

from blockcs import (
    DimensionMismatchError,
    FormatError,
    GmmModel,
    InvalidParameterError,
    PatchGmm,
    TooFewPatchesError,
    TrainingConfig,
    load_model,
    log_likelihood,
    save_model,
    score_samples,
    train_gmm,
)

from helpers import random_spd


class TestTrainingBasics:
    def test_degenerate_identical_patches(self):
        patches = np.tile(np.linspace(0.1, 0.9, 16)[:, None], (1, 50))
        model = train_gmm(patches, TrainingConfig(k=1, eps_reg=1e-4, seed=0))
        assert np.allclose(model.means[0], patches[:, 0], atol=1e-12)
        assert np.allclose(model.covariances[0], 1e-4 * np.eye(16), atol=1e-12)
        assert model.weights[0] == pytest.approx(1.0, abs=1e-15)

    def test_two_separated_clusters_recover_centroids(self):
        rng = np.random.default_rng(0)
        a = rng.normal(0.0, 0.05, size=(400, 4))
        b = rng.normal(10.0, 0.05, size=(400, 4))
        data = np.vstack([a, b])
        est = PatchGmm(n_components=2, seed=1, reg_covar=1e-10).fit(data)
        means = est.model_.means
        centroids = np.array([a.mean(axis=0), b.mean(axis=0)])
        # match components to clusters by distance
        order = np.argsort(means[:, 0])
        want = centroids[np.argsort(centroids[:, 0])]
        assert np.abs(means[order] - want).max() <= 1e-6

    def test_k1_matches_closed_form_mle(self, small_corpus):
        data = small_corpus.T
        eps = 1e-6
        est = PatchGmm(n_components=1, reg_covar=eps, seed=0).fit(data)
        mean = data.mean(axis=0)
        centered = data - mean
        cov = centered.T @ centered / data.shape[0] + eps * np.eye(data.shape[1])
        assert np.abs(est.model_.means[0] - mean).max() <= 1e-10
        assert np.abs(est.model_.covariances[0] - cov).max() <= 1e-10

    def test_log_likelihood_trace_monotone(self, small_corpus):
        est = PatchGmm(n_components=5, seed=3).fit(small_corpus.T)
        diffs = np.diff(est.log_likelihood_trace_)
        assert diffs.min() >= -1e-9

    def test_random_responsibility_init(self, small_corpus):
        est = PatchGmm(n_components=3, seed=2, init="random-responsibility").fit(
            small_corpus.T
        )
        assert est.model_.n_components == 3

    def test_unknown_init_rejected(self, small_corpus):
        with pytest.raises(InvalidParameterError):
            PatchGmm(n_components=2, init="bogus").fit(small_corpus.T)

    def test_too_few_patches(self):
        with pytest.raises(TooFewPatchesError):
            PatchGmm(n_components=10).fit(np.zeros((4, 8)))

    def test_trained_model_satisfies_invariants(self, small_corpus):
        est = PatchGmm(n_components=4, seed=5).fit(small_corpus.T)
        est.model_.validate(eigenvalue_floor=est.reg_covar_)

    def test_training_deterministic(self, small_corpus):
        a = PatchGmm(n_components=3, seed=9).fit(small_corpus.T).model_
        b = PatchGmm(n_components=3, seed=9).fit(small_corpus.T).model_
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.covariances, b.covariances)

    def test_train_gmm_wrapper_uses_column_layout(self, small_corpus):
        cfg = TrainingConfig(k=3, seed=9)
        model = train_gmm(small_corpus, cfg)
        direct = PatchGmm(n_components=3, seed=9).fit(small_corpus.T).model_
        assert np.array_equal(model.means, direct.means)


class TestLogLikelihood:
    def test_standard_normal_at_mode(self):
        model = GmmModel(
            weights=np.array([1.0]),
            means=np.zeros((1, 2)),
            covariances=np.eye(2)[None],
        )
        assert log_likelihood(model, np.zeros(2)) == pytest.approx(
            -math.log(2.0 * math.pi), abs=1e-12
        )
        assert -math.log(2.0 * math.pi) == pytest.approx(-1.8378770664093453, abs=1e-12)

    def test_mixture_bounded_by_components(self):
        rng = np.random.default_rng(4)
        k, p = 3, 4
        covs = np.stack([random_spd(rng, p) for _ in range(k)])
        weights = rng.random(k)
        weights /= weights.sum()
        model = GmmModel(weights=weights, means=rng.normal(size=(k, p)), covariances=covs)
        for _ in range(20):
            x = rng.normal(size=p)
            parts = np.array(
                [
                    -0.5 * (p * math.log(2 * math.pi) + np.linalg.slogdet(covs[j])[1])
                    - 0.5 * (x - model.means[j]) @ np.linalg.inv(covs[j]) @ (x - model.means[j])
                    for j in range(k)
                ]
            )
            value = log_likelihood(model, x)
            assert value >= (parts + np.log(weights)).max() - 1e-10
            assert value <= parts.max() + 1e-10

    def test_matches_dense_inverse_oracle(self):
        rng = np.random.default_rng(8)
        for p in (2, 4, 8):
            k = 3
            covs = np.stack([random_spd(rng, p) for _ in range(k)])
            weights = rng.random(k)
            weights /= weights.sum()
            means = rng.normal(size=(k, p))
            model = GmmModel(weights=weights, means=means, covariances=covs)
            for _ in range(10):
                x = rng.normal(size=p)
                dens = 0.0
                for j in range(k):
                    diff = x - means[j]
                    quad = diff @ np.linalg.inv(covs[j]) @ diff
                    norm = (2 * math.pi) ** p * np.linalg.det(covs[j])
                    dens += weights[j] * math.exp(-0.5 * quad) / math.sqrt(norm)
                assert log_likelihood(model, x) == pytest.approx(
                    math.log(dens), abs=1e-10
                )

    def test_permutation_invariance(self):
        rng = np.random.default_rng(12)
        k, p = 4, 3
        covs = np.stack([random_spd(rng, p) for _ in range(k)])
        weights = rng.random(k)
        weights /= weights.sum()
        means = rng.normal(size=(k, p))
        model = GmmModel(weights=weights, means=means, covariances=covs)
        perm = np.array([2, 0, 3, 1])
        permuted = GmmModel(
            weights=weights[perm], means=means[perm], covariances=covs[perm]
        )
        x = rng.normal(size=p)
        assert log_likelihood(model, x) == pytest.approx(
            log_likelihood(permuted, x), abs=1e-12
        )

    def test_dimension_mismatch(self, small_model):
        with pytest.raises(DimensionMismatchError):
            log_likelihood(small_model, np.zeros(small_model.dim + 1))

    def test_score_samples_matches_scalar_api(self, small_model):
        rng = np.random.default_rng(1)
        rows = rng.random((5, small_model.dim))
        batch = score_samples(small_model, rows)
        single = [log_likelihood(small_model, rows[i]) for i in range(5)]
        assert np.allclose(batch, single, atol=1e-12)


class TestModelInvariants:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(InvalidParameterError):
            GmmModel(
                weights=np.array([0.5, 0.4]),
                means=np.zeros((2, 2)),
                covariances=np.stack([np.eye(2)] * 2),
            ).validate()

    def test_asymmetric_covariance_rejected(self):
        cov = np.array([[1.0, 0.2], [0.0, 1.0]])
        with pytest.raises(InvalidParameterError):
            GmmModel(
                weights=np.array([1.0]), means=np.zeros((1, 2)), covariances=cov[None]
            ).validate()

    def test_shapes_validated(self):
        with pytest.raises(DimensionMismatchError):
            GmmModel(
                weights=np.array([1.0]),
                means=np.zeros((1, 2)),
                covariances=np.zeros((1, 3, 3)),
            )


class TestModelFiles:
    def test_roundtrip_field_exact(self, small_model, tmp_path):
        path = tmp_path / "m.bgmm"
        save_model(small_model, path, metadata={"seed": 0})
        loaded = load_model(path)
        assert np.array_equal(loaded.weights, small_model.weights)
        assert np.array_equal(loaded.means, small_model.means)
        assert np.array_equal(loaded.covariances, small_model.covariances)

    def test_tampered_payload_rejected(self, small_model, tmp_path):
        path = tmp_path / "m.bgmm"
        save_model(small_model, path)
        raw = bytearray(path.read_bytes())
        raw[-3] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="checksum"):
            load_model(path)

    def test_unknown_version_rejected(self, small_model, tmp_path):
        path = tmp_path / "m.bgmm"
        save_model(small_model, path)
        raw = path.read_bytes()
        path.write_bytes(raw.replace(b'"version":1', b'"version":2', 1))
        with pytest.raises(FormatError, match="version"):
            load_model(path)

    def test_not_a_model_file(self, tmp_path):
        path = tmp_path / "junk.bgmm"
        path.write_bytes(b"\x00\x01\x02")
        with pytest.raises(FormatError):
            load_model(path)

    def test_large_model_parses_quickly(self, tmp_path):
        rng = np.random.default_rng(0)
        k, p = 20, 64
        covs = np.stack([random_spd(rng, p, jitter=1.0) for _ in range(k)])
        weights = np.full(k, 1.0 / k)
        model = GmmModel(weights=weights, means=rng.normal(size=(k, p)), covariances=covs)
        path = tmp_path / "big.bgmm"
        save_model(model, path)
        start = time.perf_counter()
        load_model(path)
        assert time.perf_counter() - start < 0.1


class TestSklearnCompat:
    def test_get_params_and_clone(self):
        est = PatchGmm(n_components=7, tol=1e-5, seed=4)
        params = est.get_params()
        assert params["n_components"] == 7
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_fit_returns_self_and_sets_attributes(self, small_corpus):
        est = PatchGmm(n_components=2, seed=0)
        assert est.fit(small_corpus.T) is est
        assert hasattr(est, "model_")
        assert est.n_iter_ == len(est.log_likelihood_trace_)

    def test_score_samples_requires_fit(self):
        with pytest.raises(InvalidParameterError):
            PatchGmm().score_samples(np.zeros((2, 4)))
