"""Sensing-pattern generation and measurement simulation.

One pattern matrix is shared by every block: each of its rows is a binary
aperture pattern, and a sensor reading is that row's inner product with the
vectorized block. Measurements for a whole image form an
(n_measurements, n_blocks) matrix with one column per block.

Reproducibility contract: every random quantity is a pure function of the
documented 64-bit seed. Streams are numpy PCG64 generators keyed by
``SeedSequence([seed, tag, ...])`` with the tags below, so pattern entries,
permutations, and per-column noise never share a stream even when they share
a seed value. Per-column noise streams additionally carry the column index,
which makes column-parallel sensing bit-identical to sequential sensing.
"""

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from .errors import DimensionMismatchError, FormatError, InvalidParameterError
from .image import BlockGrid
from .validation import as_matrix, check_positive_int, check_seed

RANDOM_BINARY = "random-binary"
PERMUTED_HADAMARD = "permuted-hadamard"
MATRIX_KINDS = (RANDOM_BINARY, PERMUTED_HADAMARD)

# SeedSequence domain tags (documented in README).
_PATTERN_STREAM = 0
_NOISE_STREAM = 1
CORPUS_STREAM = 2  # used by training-corpus subsampling


def _stream(*key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


@dataclass(frozen=True)
class SensingMatrix:
    """Shared per-block pattern matrix with its provenance.

    ``entries`` is n_measurements x block_dim with values in {0, 1}; the
    matrix is always re-derivable from (kind, seed, shape) and is never
    stored densely on disk.
    """

    kind: str
    seed: int
    entries: np.ndarray

    def __post_init__(self):
        if self.kind not in MATRIX_KINDS:
            raise InvalidParameterError(f"unknown matrix kind {self.kind!r}")
        check_seed(self.seed)
        entries = as_matrix(self.entries, name="entries")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n_measurements(self):
        return self.entries.shape[0]

    @property
    def block_dim(self):
        return self.entries.shape[1]

    @property
    def descriptor(self):
        return MatrixDescriptor(
            kind=self.kind,
            seed=self.seed,
            n_measurements=self.n_measurements,
            block_dim=self.block_dim,
        )


@dataclass(frozen=True)
class MatrixDescriptor:
    kind: str
    seed: int
    n_measurements: int
    block_dim: int


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. zero-mean Gaussian measurement noise, seeded per column."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidParameterError(f"sigma must be >= 0, got {self.sigma}")
        check_seed(self.seed)


def _check_pattern_shape(m, p):
    m = check_positive_int(m, "n_measurements")
    p = check_positive_int(p, "block_dim")
    if m > p:
        raise InvalidParameterError(
            f"n_measurements must not exceed block_dim, got {m} > {p}"
        )
    return m, p


def make_random_binary(m, p, seed):
    """Bernoulli(1/2) pattern matrix over {0, 1}, m rows of dimension p."""
    m, p = _check_pattern_shape(m, p)
    seed = check_seed(seed)
    rng = _stream(seed, _PATTERN_STREAM)
    entries = rng.integers(0, 2, size=(m, p)).astype(np.float64)
    return SensingMatrix(kind=RANDOM_BINARY, seed=seed, entries=entries)


def permuted_sylvester(m, p, seed):
    """The +/-1 matrix behind a permuted-Hadamard pattern (before {0,1} mapping).

    Builds the Sylvester Hadamard matrix of order p, applies a seeded random
    column permutation then a seeded random row permutation (both drawn from
    the same pattern stream, in that order), and keeps the first m rows.
    """
    m, p = _check_pattern_shape(m, p)
    seed = check_seed(seed)
    if p & (p - 1) != 0:
        raise InvalidParameterError(f"block_dim must be a power of two, got {p}")
    rng = _stream(seed, _PATTERN_STREAM)
    cols = rng.permutation(p)
    rows = rng.permutation(p)
    h = hadamard(p).astype(np.float64)
    return h[:, cols][rows, :][:m]


def make_permuted_hadamard(m, p, seed):
    """Permuted-Hadamard pattern matrix mapped into {0, 1} via (h+1)/2."""
    g = permuted_sylvester(m, p, seed)
    return SensingMatrix(kind=PERMUTED_HADAMARD, seed=check_seed(seed), entries=(g + 1.0) / 2.0)


def matrix_from_descriptor(desc):
    """Re-derive a SensingMatrix from its (kind, seed, shape) descriptor."""
    if desc.kind == RANDOM_BINARY:
        return make_random_binary(desc.n_measurements, desc.block_dim, desc.seed)
    if desc.kind == PERMUTED_HADAMARD:
        return make_permuted_hadamard(desc.n_measurements, desc.block_dim, desc.seed)
    raise InvalidParameterError(f"unknown matrix kind {desc.kind!r}")


def noise_column(noise, n_measurements, column):
    """Noise vector for one block, from the column's dedicated substream."""
    rng = _stream(noise.seed, _NOISE_STREAM, int(column))
    return rng.normal(0.0, noise.sigma, size=n_measurements)


def sense(blocks, a, noise):
    """Simulate measurements: pattern matrix times blocks, plus noise.

    With sigma == 0 the result is the exact matrix product (no hidden
    scaling); each measurement is a raw photon-style sum over open aperture
    elements.
    """
    blocks = as_matrix(blocks, name="blocks")
    if a.block_dim != blocks.shape[0]:
        raise DimensionMismatchError(
            f"pattern dimension {a.block_dim} does not match block dimension "
            f"{blocks.shape[0]}"
        )
    data = a.entries @ blocks
    if noise.sigma > 0:
        m, n = data.shape
        for j in range(n):
            data[:, j] += noise_column(noise, m, j)
    return data


def csr_to_measurements(csr, p):
    """Measurements per block for a compressive sensing ratio: floor(csr*p), min 1."""
    p = check_positive_int(p, "block_dim")
    if not 0.0 < csr <= 1.0:
        raise InvalidParameterError(f"csr must lie in (0, 1], got {csr}")
    return max(1, math.floor(csr * p))


# ---------------------------------------------------------------------------
# Measurement files: one line of JSON (sorted keys) followed by the raw
# little-endian float64 payload in column order. Pattern matrices are
# re-derived from kind+seed and never written densely.
# ---------------------------------------------------------------------------

MEASUREMENT_FORMAT = "blockcs-measurements"
MEASUREMENT_VERSION = 1


@dataclass
class MeasurementSet:
    """Per-block measurements plus everything needed to re-derive them."""

    data: np.ndarray  # (n_measurements, n_blocks)
    matrix: MatrixDescriptor
    noise: NoiseModel
    grid: BlockGrid
    source_image: str | None = None
    trial: int | None = None

    def __post_init__(self):
        self.data = as_matrix(self.data, name="measurements")
        if self.data.shape != (self.matrix.n_measurements, self.grid.n_blocks):
            raise DimensionMismatchError(
                f"measurements must be "
                f"{(self.matrix.n_measurements, self.grid.n_blocks)}, "
                f"got {self.data.shape}"
            )


def measure_image(image_blocks, a, noise, grid, source_image=None, trial=None):
    """Sense all blocks of one image and wrap the result with its metadata."""
    data = sense(image_blocks, a, noise)
    return MeasurementSet(
        data=data,
        matrix=a.descriptor,
        noise=noise,
        grid=grid,
        source_image=source_image,
        trial=trial,
    )


def _measurement_header(ms, payload):
    return {
        "format": MEASUREMENT_FORMAT,
        "version": MEASUREMENT_VERSION,
        "m": ms.matrix.n_measurements,
        "p": ms.matrix.block_dim,
        "n_blocks": ms.grid.n_blocks,
        "block_side": ms.grid.block_side,
        "overlap": ms.grid.overlap,
        "rows": ms.grid.rows,
        "cols": ms.grid.cols,
        "matrix_kind": ms.matrix.kind,
        "matrix_seed": ms.matrix.seed,
        "noise_sigma": ms.noise.sigma,
        "noise_seed": ms.noise.seed,
        "source_image": ms.source_image,
        "trial": ms.trial,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }


def measurement_bytes(ms):
    """Serialize a MeasurementSet to its canonical on-disk bytes."""
    payload = np.asfortranarray(ms.data).astype("<f8").tobytes(order="F")
    header = _measurement_header(ms, payload)
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n" + payload


def save_measurements(ms, path):
    with open(path, "wb") as fh:
        fh.write(measurement_bytes(ms))


def load_measurements(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise FormatError(f"{path}: missing measurement header")
    try:
        header = json.loads(raw[:newline].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable measurement header") from exc
    if header.get("format") != MEASUREMENT_FORMAT:
        raise FormatError(f"{path}: not a measurement file")
    if header.get("version") != MEASUREMENT_VERSION:
        raise FormatError(
            f"{path}: unsupported measurement version {header.get('version')!r}"
        )
    payload = raw[newline + 1 :]
    m, n_blocks = header["m"], header["n_blocks"]
    expected = m * n_blocks * 8
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, need {expected}"
        )
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise FormatError(f"{path}: payload checksum mismatch")
    data = np.frombuffer(payload, dtype="<f8").reshape((m, n_blocks), order="F")
    grid = BlockGrid(
        block_side=header["block_side"],
        rows=header["rows"],
        cols=header["cols"],
        overlap=header["overlap"],
    )
    return MeasurementSet(
        data=data.copy(),
        matrix=MatrixDescriptor(
            kind=header["matrix_kind"],
            seed=header["matrix_seed"],
            n_measurements=m,
            block_dim=header["p"],
        ),
        noise=NoiseModel(sigma=header["noise_sigma"], seed=header["noise_seed"]),
        grid=grid,
        source_image=header.get("source_image"),
        trial=header.get("trial"),
    )
