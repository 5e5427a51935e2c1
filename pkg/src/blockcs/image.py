"""Grayscale images, block tiling, stitching, and the PSNR metric.

An image is a plain 2-D float64 array with intensities nominally in [0, 1]
(reconstructions may transiently leave that range; values are clamped only
when written to disk). Blocks are vectorized row-major within the block and
enumerated row-major over the image, giving the block matrix layout used by
the sensing and inversion stages: one column per block.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionMismatchError, FormatError, InvalidParameterError
from .validation import as_image, as_matrix, check_positive_int


@dataclass(frozen=True)
class BlockGrid:
    """Tiling of an image into square blocks, optionally overlapping.

    ``rows`` and ``cols`` count blocks; adjacent blocks share ``overlap``
    pixels per axis. With ``overlap == 0`` the grid must tile the image
    exactly; trailing partial blocks are rejected, never padded.
    """

    block_side: int
    rows: int
    cols: int
    overlap: int = 0

    def __post_init__(self):
        check_positive_int(self.block_side, "block_side")
        check_positive_int(self.rows, "rows")
        check_positive_int(self.cols, "cols")
        if not 0 <= self.overlap < self.block_side:
            raise InvalidParameterError(
                f"overlap must satisfy 0 <= overlap < block_side, got {self.overlap}"
            )

    @property
    def block_dim(self):
        """Pixels per vectorized block."""
        return self.block_side * self.block_side

    @property
    def n_blocks(self):
        return self.rows * self.cols

    @property
    def stride(self):
        return self.block_side - self.overlap

    @property
    def image_shape(self):
        h = (self.rows - 1) * self.stride + self.block_side
        w = (self.cols - 1) * self.stride + self.block_side
        return (h, w)

    @classmethod
    def for_image(cls, height, width, block_side, overlap=0):
        """Build the grid covering a height-by-width image exactly.

        Raises DimensionMismatchError when the block layout cannot cover the
        image without a partial trailing block.
        """
        check_positive_int(block_side, "block_side")
        if not 0 <= overlap < block_side:
            raise InvalidParameterError(
                f"overlap must satisfy 0 <= overlap < block_side, got {overlap}"
            )
        stride = block_side - overlap
        for size, axis in ((height, "height"), (width, "width")):
            if size < block_side or (size - block_side) % stride != 0:
                raise DimensionMismatchError(
                    f"image {axis} {size} is not covered exactly by "
                    f"block_side={block_side}, overlap={overlap}"
                )
        rows = (height - block_side) // stride + 1
        cols = (width - block_side) // stride + 1
        return cls(block_side=block_side, rows=rows, cols=cols, overlap=overlap)


def _check_grid_matches(image, grid):
    if image.shape != grid.image_shape:
        raise DimensionMismatchError(
            f"grid covers {grid.image_shape}, image is {image.shape}"
        )


def extract_blocks(image, grid):
    """Vectorize the image blocks into a (block_dim, n_blocks) matrix.

    Column i holds block i (blocks enumerated row-major over the image,
    pixels row-major within each block). Deterministic: the same image
    always yields the same matrix.
    """
    image = as_image(image)
    _check_grid_matches(image, grid)
    b, s = grid.block_side, grid.stride
    windows = sliding_window_view(image, (b, b))[::s, ::s]
    blocks = windows.reshape(grid.n_blocks, grid.block_dim).T
    return np.ascontiguousarray(blocks)


def _feather_profile(block_side, overlap):
    """Per-axis feather weights for one block edge-to-edge.

    The weight ramps linearly from 0 at the geometric block edge to 1 at
    distance ``overlap``, sampled at pixel centers, so every pixel keeps a
    strictly positive weight and normalization is always well defined.
    """
    idx = np.arange(block_side, dtype=np.float64)
    dist = np.minimum(idx + 0.5, block_side - idx - 0.5)
    return np.minimum(1.0, dist / overlap)


def feather_weights(grid):
    """2-D feather weight mask applied to every block before blending."""
    if grid.overlap == 0:
        return np.ones((grid.block_side, grid.block_side))
    w = _feather_profile(grid.block_side, grid.overlap)
    return np.outer(w, w)


def stitch_blocks(blocks, grid):
    """Assemble a block matrix back into an image.

    With overlap 0 this is the exact inverse of extract_blocks. With
    overlap > 0, overlapping pixels are combined with normalized linear
    feather weights. The blend is computed as a weighted correction on top
    of a plain paste, so blocks that agree on their shared pixels stitch
    back bit-exactly.
    """
    blocks = as_matrix(blocks, name="blocks")
    if blocks.shape != (grid.block_dim, grid.n_blocks):
        raise DimensionMismatchError(
            f"blocks must be {(grid.block_dim, grid.n_blocks)}, got {blocks.shape}"
        )
    b, s = grid.block_side, grid.stride
    h, w = grid.image_shape
    tiles = blocks.T.reshape(grid.rows, grid.cols, b, b)

    if grid.overlap == 0:
        return tiles.transpose(0, 2, 1, 3).reshape(h, w).copy()

    base = np.zeros((h, w))
    for r in range(grid.rows):
        for c in range(grid.cols):
            base[r * s : r * s + b, c * s : c * s + b] = tiles[r, c]

    weight = feather_weights(grid)
    wsum = np.zeros((h, w))
    delta = np.zeros((h, w))
    for r in range(grid.rows):
        for c in range(grid.cols):
            sl = (slice(r * s, r * s + b), slice(c * s, c * s + b))
            wsum[sl] += weight
            delta[sl] += weight * (tiles[r, c] - base[sl])
    return base + delta / wsum


def psnr(reference, candidate, peak=1.0):
    """Peak signal-to-noise ratio in decibels, 10*log10(peak^2 / MSE).

    Returns math.inf when the images are identical (MSE == 0).
    """
    reference = as_image(reference, name="reference")
    candidate = as_image(candidate, name="candidate")
    if reference.shape != candidate.shape:
        raise DimensionMismatchError(
            f"images differ in shape: {reference.shape} vs {candidate.shape}"
        )
    if peak <= 0:
        raise InvalidParameterError(f"peak must be positive, got {peak}")
    mse = float(np.mean((reference - candidate) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def clamp(image):
    """Clip intensities into [0, 1] (used at save time and on request)."""
    return np.clip(image, 0.0, 1.0)


# ---------------------------------------------------------------------------
# File I/O. PGM (binary P5, maxval 255) is the native format and round-trips
# bit-exactly; 8-bit grayscale PNG reading is an optional convenience that
# needs Pillow.
# ---------------------------------------------------------------------------


def _read_pgm_tokens(data, count):
    """Yield the first `count` whitespace/comment-delimited header tokens."""
    tokens = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise FormatError("truncated PGM header")
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            pos = data.index(b"\n", pos) + 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    return tokens, pos + 1  # header ends with a single whitespace byte


def load_pgm(path):
    """Read a binary (P5) 8-bit PGM into a float image in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM (missing P5 magic)")
    (magic, width, height, maxval), offset = _read_pgm_tokens(data, 4)
    width, height, maxval = int(width), int(height), int(maxval)
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    expected = width * height
    raster = data[offset : offset + expected]
    if len(raster) != expected:
        raise FormatError(f"{path}: raster holds {len(raster)} bytes, need {expected}")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return img.astype(np.float64) / 255.0


def save_pgm(image, path):
    """Write a binary (P5) 8-bit PGM; intensities are clamped then rounded.

    Rounding is IEEE round-half-to-even on v*255. The header is canonical,
    so saving the result of load_pgm reproduces our own files byte for byte.
    """
    image = as_image(image)
    quantized = np.rint(clamp(image) * 255.0).astype(np.uint8)
    h, w = quantized.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quantized.tobytes())


def load_png(path):
    """Read an 8-bit grayscale PNG (requires the optional Pillow extra)."""
    try:
        from PIL import Image as PILImage
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise FormatError(
            "PNG reading needs Pillow; install the 'png' extra or use PGM"
        ) from exc
    with PILImage.open(path) as im:
        gray = im.convert("L")
        arr = np.asarray(gray, dtype=np.uint8)
    return arr.astype(np.float64) / 255.0


def load_image(path):
    """Load a grayscale image (PGM native, PNG optional) scaled to [0, 1]."""
    name = str(path).lower()
    if name.endswith(".png"):
        return load_png(path)
    return load_pgm(path)


def save_image(image, path):
    """Save as 8-bit PGM (the only supported output format)."""
    save_pgm(image, path)
