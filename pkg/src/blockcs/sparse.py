"""Sparse-coding baseline: l1-penalized reconstruction via (F)ISTA.

Solves 0.5 * ||y - A D s||^2 + lam * ||s||_1 per block with proximal
gradient steps of size 1/L, where L is the top eigenvalue of (AD)'(AD)
estimated by power iteration. Plain ISTA descends the objective
monotonically; the accelerated variant (FISTA momentum) trades that for
speed and only the convergence criterion applies.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError
from .validation import as_matrix, as_vector, sensing_entries

IDENTITY = "identity"
DCT2D = "dct2d"


@dataclass(frozen=True)
class Dictionary:
    """Synthesis dictionary: block = d @ coefficients."""

    d: np.ndarray
    kind: str

    def __post_init__(self):
        d = as_matrix(self.d, name="dictionary")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def block_dim(self):
        return self.d.shape[0]

    @property
    def n_atoms(self):
        return self.d.shape[1]


def make_identity_dictionary(p):
    return Dictionary(d=np.eye(p), kind=IDENTITY)


def make_dct_dictionary(p):
    """Orthonormal separable 2-D DCT-II basis on sqrt(p) x sqrt(p) patches.

    Columns are the basis atoms ordered row-major by 2-D frequency, so the
    first column is the constant (DC) atom.
    """
    side = math.isqrt(int(p))
    if side * side != p:
        raise InvalidParameterError(f"block_dim must be a perfect square, got {p}")
    n = np.arange(side)
    basis = np.cos(np.pi * (2.0 * n[None, :] + 1.0) * n[:, None] / (2.0 * side))
    basis *= np.sqrt(2.0 / side)
    basis[0] *= np.sqrt(0.5)
    # rows of `basis` analyze; the synthesis dictionary is its transpose,
    # lifted to 2-D separably
    d = np.kron(basis.T, basis.T)
    return Dictionary(d=d, kind=DCT2D)


def make_dictionary(kind, p):
    if kind == IDENTITY:
        return make_identity_dictionary(p)
    if kind == DCT2D:
        return make_dct_dictionary(p)
    raise InvalidParameterError(f"unknown dictionary kind {kind!r}")


@dataclass(frozen=True)
class IstaConfig:
    lam: float = 0.01
    max_iters: int = 2000
    tol: float = 1e-8
    accelerated: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidParameterError(f"lam must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class IstaResult:
    """Solver output; ``converged`` is a flag, never an exception."""

    coeffs: np.ndarray
    block: np.ndarray
    n_iter: int
    converged: bool
    objectives: np.ndarray

    def __iter__(self):  # allows: s, x = solve_block_sparse(...)
        return iter((self.coeffs, self.block))


def soft_threshold(v, t):
    """Elementwise sign(v) * max(|v| - t, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def lipschitz_constant(op, n_iters=50, tol=1e-8, seed=0):
    """Top eigenvalue of op'op by power iteration on the Gram matrix."""
    gram = op.T @ op
    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.normal(size=gram.shape[0])
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(n_iters):
        w = gram @ v
        new_value = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(new_value - value) <= tol * max(abs(new_value), 1.0):
            value = new_value
            break
        value = new_value
    return value


def _objective(op, y, s, lam):
    resid = y - op @ s
    return 0.5 * float(resid @ resid) + lam * float(np.abs(s).sum())


def solve_block_sparse(y, a, dictionary, cfg=IstaConfig(), s0=None, lipschitz=None):
    """Recover one block from its measurements by l1-penalized least squares.

    Returns an IstaResult whose ``coeffs``/``block`` unpack as (s, x) with
    x = dictionary @ s. Non-convergence within max_iters is reported through
    the ``converged`` flag together with the iteration count. ``lipschitz``
    lets batch callers reuse the power-iteration estimate.
    """
    entries = sensing_entries(a)
    if entries.shape[1] != dictionary.block_dim:
        raise DimensionMismatchError(
            f"pattern dimension {entries.shape[1]} does not match dictionary "
            f"dimension {dictionary.block_dim}"
        )
    y = as_vector(y, length=entries.shape[0], name="measurement vector")
    op = entries @ dictionary.d
    lip = lipschitz_constant(op) if lipschitz is None else lipschitz
    if lip == 0.0:
        lip = 1.0
    step = 1.0 / lip

    q = dictionary.n_atoms
    s = np.zeros(q) if s0 is None else as_vector(s0, length=q, name="s0").copy()
    momentum = s.copy()
    t = 1.0
    converged = False
    n_iter = 0
    objectives = [_objective(op, y, s, cfg.lam)]

    for n_iter in range(1, cfg.max_iters + 1):
        point = momentum if cfg.accelerated else s
        grad = op.T @ (op @ point - y)
        s_new = soft_threshold(point - step * grad, cfg.lam * step)
        if cfg.accelerated:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            momentum = s_new + ((t - 1.0) / t_new) * (s_new - s)
            t = t_new
        delta = float(np.linalg.norm(s_new - s))
        scale = max(float(np.linalg.norm(s_new)), 1.0)
        s = s_new
        objectives.append(_objective(op, y, s, cfg.lam))
        if delta <= cfg.tol * scale:
            converged = True
            break

    return IstaResult(
        coeffs=s,
        block=dictionary.d @ s,
        n_iter=n_iter,
        converged=converged,
        objectives=np.asarray(objectives),
    )


def reconstruct_blocks_sparse(ms, a, dictionary, cfg=IstaConfig()):
    """Solve every column of a MeasurementSet; returns blocks and a flag array."""
    data = ms.data
    p = dictionary.block_dim
    lip = lipschitz_constant(sensing_entries(a) @ dictionary.d)
    blocks = np.empty((p, data.shape[1]))
    converged = np.empty(data.shape[1], dtype=bool)
    for j in range(data.shape[1]):
        result = solve_block_sparse(data[:, j], a, dictionary, cfg, lipschitz=lip)
        blocks[:, j] = result.block
        converged[j] = result.converged
    return blocks, converged
