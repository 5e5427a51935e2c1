import numpy as np
import pytest

from blockcs import (
    DimensionMismatchError,
    InvalidParameterError,
    IstaConfig,
    make_dct_dictionary,
    make_dictionary,
    make_permuted_hadamard,
    make_random_binary,
    soft_threshold,
    solve_block_sparse,
)

from helpers import identity_matrix


class TestDctDictionary:
    def test_dc_atom_of_p4(self):
        d = make_dct_dictionary(4)
        assert np.allclose(d.d[:, 0], np.full(4, 0.5), atol=1e-12)

    @pytest.mark.parametrize("p", [16, 64, 256])
    def test_orthonormal(self, p):
        d = make_dct_dictionary(p)
        assert np.abs(d.d.T @ d.d - np.eye(p)).max() <= 1e-10

    def test_constant_patch_is_dc_only(self):
        d = make_dct_dictionary(64)
        coeffs = d.d.T @ np.full(64, 0.7)
        assert abs(coeffs[0]) > 1.0
        assert np.abs(coeffs[1:]).max() <= 1e-12

    def test_rejects_non_square_dimension(self):
        with pytest.raises(InvalidParameterError):
            make_dct_dictionary(12)

    def test_unknown_kind(self):
        with pytest.raises(InvalidParameterError):
            make_dictionary("wavelets", 16)


class TestSoftThreshold:
    def test_formula(self):
        v = np.array([-2.0, -0.5, 0.0, 0.3, 1.5])
        expected = np.sign(v) * np.maximum(np.abs(v) - 0.4, 0.0)
        assert np.array_equal(soft_threshold(v, 0.4), expected)


class TestSolver:
    def test_identity_problem_closed_form(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=16)
        lam = 0.3
        result = solve_block_sparse(
            y, identity_matrix(16), make_dictionary("identity", 16),
            IstaConfig(lam=lam, accelerated=False),
        )
        assert result.converged
        assert np.abs(result.coeffs - soft_threshold(y, lam)).max() <= 1e-6

    def test_least_squares_limit_full_rank(self):
        # lam=0, M=P invertible: the solution solves the linear system
        p = 16
        a = make_permuted_hadamard(p, p, 4)
        rng = np.random.default_rng(1)
        y = rng.normal(size=p)
        result = solve_block_sparse(
            y, a, make_dictionary("identity", p),
            IstaConfig(lam=0.0, max_iters=50000, tol=1e-14, accelerated=True),
        )
        assert np.linalg.norm(y - a.entries @ result.block) <= 1e-6

    def test_sparse_recovery_with_debiasing(self):
        # generator is the oracle: plant a 3-sparse vector, recover support,
        # then debias by least squares on the recovered support
        rng = np.random.default_rng(2)
        p, m = 64, 32
        raw = make_random_binary(m, p, 7).entries
        a = raw - raw.mean(axis=0, keepdims=True)
        true_support = np.array([5, 23, 51])
        s_true = np.zeros(p)
        s_true[true_support] = np.array([1.0, -0.8, 0.6])
        y = a @ s_true
        result = solve_block_sparse(
            y, a, make_dictionary("identity", p),
            IstaConfig(lam=0.005, max_iters=20000, tol=1e-12),
        )
        recovered = np.flatnonzero(np.abs(result.coeffs) > 1e-3)
        assert set(true_support) <= set(recovered)
        debiased = np.zeros(p)
        sub = a[:, recovered]
        debiased[recovered] = np.linalg.lstsq(sub, y, rcond=None)[0]
        assert np.abs(debiased - s_true).max() <= 1e-2

    def test_ista_objective_monotone(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            m, p = 8, 20
            a = rng.normal(size=(m, p))
            y = rng.normal(size=m)
            result = solve_block_sparse(
                y, a, make_dictionary("identity", p),
                IstaConfig(lam=0.05, max_iters=300, accelerated=False),
            )
            diffs = np.diff(result.objectives)
            assert diffs.max() <= 1e-12

    def test_fixed_point_does_not_move(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=12)
        lam = 0.2
        fixed = soft_threshold(y, lam)
        result = solve_block_sparse(
            y, identity_matrix(12), make_dictionary("identity", 12),
            IstaConfig(lam=lam, accelerated=False), s0=fixed,
        )
        assert np.abs(result.coeffs - fixed).max() <= 1e-12

    def test_non_convergence_flagged_not_fatal(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(8, 32))
        y = rng.normal(size=8)
        result = solve_block_sparse(
            y, a, make_dictionary("identity", 32),
            IstaConfig(lam=0.01, max_iters=3, tol=1e-16),
        )
        assert not result.converged
        assert result.n_iter == 3

    def test_unpacks_as_pair(self):
        y = np.zeros(4)
        s, x = solve_block_sparse(
            y, identity_matrix(4), make_dictionary("identity", 4), IstaConfig(lam=0.1)
        )
        assert np.array_equal(x, np.zeros(4))
        assert np.array_equal(s, np.zeros(4))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            solve_block_sparse(
                np.zeros(4), identity_matrix(4), make_dictionary("identity", 9)
            )

    def test_negative_lam_rejected(self):
        with pytest.raises(InvalidParameterError):
            IstaConfig(lam=-0.1)

    def test_dct_path_reconstructs_smooth_block(self):
        # smooth blocks are compressible in the DCT basis
        side = 8
        p = side * side
        yy, xx = np.mgrid[0:side, 0:side]
        block = 0.5 + 0.3 * np.sin(2 * np.pi * xx / side) * np.cos(np.pi * yy / side)
        x_true = block.reshape(-1)
        a = make_random_binary(48, p, 9)
        y = a.entries @ x_true
        result = solve_block_sparse(
            y, a, make_dct_dictionary(p),
            IstaConfig(lam=1e-4, max_iters=20000, tol=1e-12),
        )
        assert np.abs(result.block - x_true).max() <= 0.05
