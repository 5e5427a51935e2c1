"""Block-wise compressive imaging toolkit.

Simulates per-block compressive measurements of grayscale images, inverts
them in closed form under a Gaussian-mixture patch prior (no per-block
iteration once the posterior cache is built), offers an l1 sparse-coding
baseline, and ships a CLI that reproduces the full simulate/reconstruct/
report study.
"""

from .errors import (
    BlockcsError,
    DimensionMismatchError,
    FormatError,
    InvalidParameterError,
    NumericalError,
    TooFewPatchesError,
    VerificationError,
)
from .image import (
    BlockGrid,
    clamp,
    extract_blocks,
    feather_weights,
    load_image,
    load_pgm,
    load_png,
    psnr,
    save_image,
    save_pgm,
    stitch_blocks,
)
from .sensing import (
    MatrixDescriptor,
    MeasurementSet,
    NoiseModel,
    SensingMatrix,
    csr_to_measurements,
    load_measurements,
    make_permuted_hadamard,
    make_random_binary,
    matrix_from_descriptor,
    measure_image,
    save_measurements,
    sense,
)
from .gmm import (
    GmmModel,
    PatchGmm,
    TrainingConfig,
    load_model,
    log_likelihood,
    save_model,
    score_samples,
    train_gmm,
)
from .inversion import (
    NoisePrecision,
    PosteriorCache,
    PosteriorResult,
    build_cache,
    invert_block,
    invert_blocks,
    reconstruct_blocks,
    reconstruct_image,
)
from .sparse import (
    Dictionary,
    IstaConfig,
    IstaResult,
    make_dct_dictionary,
    make_dictionary,
    soft_threshold,
    solve_block_sparse,
)
from .estimators import GmmBlockReconstructor, IstaBlockReconstructor
from .experiment import ExperimentConfig, ResultRow, build_config

__version__ = "0.1.0"

__all__ = [
    "BlockcsError", "DimensionMismatchError", "FormatError",
    "InvalidParameterError", "NumericalError", "TooFewPatchesError",
    "VerificationError",
    "BlockGrid", "clamp", "extract_blocks", "feather_weights", "load_image",
    "load_pgm", "load_png", "psnr", "save_image", "save_pgm", "stitch_blocks",
    "MatrixDescriptor", "MeasurementSet", "NoiseModel", "SensingMatrix",
    "csr_to_measurements", "load_measurements", "make_permuted_hadamard",
    "make_random_binary", "matrix_from_descriptor", "measure_image",
    "save_measurements", "sense",
    "GmmModel", "PatchGmm", "TrainingConfig", "load_model", "log_likelihood",
    "save_model", "score_samples", "train_gmm",
    "NoisePrecision", "PosteriorCache", "PosteriorResult", "build_cache",
    "invert_block", "invert_blocks", "reconstruct_blocks", "reconstruct_image",
    "Dictionary", "IstaConfig", "IstaResult", "make_dct_dictionary",
    "make_dictionary", "soft_threshold", "solve_block_sparse",
    "GmmBlockReconstructor", "IstaBlockReconstructor",
    "ExperimentConfig", "ResultRow", "build_config",
    "__version__",
]
