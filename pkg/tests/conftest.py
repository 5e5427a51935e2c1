import numpy as np
import pytest

from blockcs import PatchGmm
from blockcs.experiment import extract_training_patches

from helpers import make_scene


@pytest.fixture(scope="session")
def small_corpus():
    """Roughly 2000 training patches of dimension 16 (4x4 blocks)."""
    scenes = [make_scene(64, 64, seed) for seed in (10, 11)]
    cols = np.concatenate(
        [extract_training_patches(img, 4, 2) for img in scenes], axis=1
    )
    rng = np.random.Generator(np.random.PCG64(0))
    keep = np.sort(rng.choice(cols.shape[1], size=1600, replace=False))
    return cols[:, keep]


@pytest.fixture(scope="session")
def small_model(small_corpus):
    """K=5 mixture over 4x4 patches; cheap enough for unit tests."""
    est = PatchGmm(n_components=5, seed=0).fit(small_corpus.T)
    return est.model_
