"""Synthetic scenes and small utilities shared by the test modules."""

import numpy as np
from scipy.ndimage import gaussian_filter

from blockcs import SensingMatrix


def make_scene(height, width, seed):
    """Deterministic grayscale scene: smooth field + blended shapes + texture.

    Statistically similar scenes (different seeds) are used for training and
    testing, keeping the corpora disjoint.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 99])))
    img = gaussian_filter(rng.normal(size=(height, width)), sigma=6.0)
    img = (img - img.min()) / (img.max() - img.min() + 1e-12)
    for _ in range(6):
        r0 = int(rng.integers(0, max(1, height - 10)))
        c0 = int(rng.integers(0, max(1, width - 10)))
        rh = int(rng.integers(4, max(5, height // 3)))
        cw = int(rng.integers(4, max(5, width // 3)))
        val = float(rng.random())
        region = (slice(r0, min(height, r0 + rh)), slice(c0, min(width, c0 + cw)))
        img[region] = 0.7 * val + 0.3 * img[region]
    yy, xx = np.mgrid[0:height, 0:width]
    fx, fy = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    img = img + 0.08 * np.sin(2.0 * np.pi * (xx * fx / width + yy * fy / height))
    img = (img - img.min()) / (img.max() - img.min() + 1e-12)
    return img


def identity_matrix(p):
    """A SensingMatrix whose entries are the identity (a valid {0,1} pattern)."""
    return SensingMatrix(kind="random-binary", seed=0, entries=np.eye(p))


def random_spd(rng, n, jitter=0.5):
    b = rng.normal(size=(n, n))
    return b @ b.T + jitter * np.eye(n)
