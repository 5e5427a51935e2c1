"""Exception hierarchy shared by the whole package.

Every error raised by blockcs derives from :class:`BlockcsError` so callers
can catch broadly, while the CLI maps the concrete classes to distinct exit
codes (see ``blockcs.cli``).
"""


class BlockcsError(Exception):
    """Base class for all blockcs errors."""


class DimensionMismatchError(BlockcsError):
    """Shapes of the supplied operands are inconsistent (bad tiling, wrong
    vector length, mismatched matrix sizes)."""


class InvalidParameterError(BlockcsError):
    """A scalar parameter is out of its documented range (non-positive count,
    ratio outside (0, 1], block dimension not a power of two, ...)."""


class TooFewPatchesError(InvalidParameterError):
    """Training corpus holds fewer patches than mixture components."""


class NumericalError(BlockcsError):
    """A factorization or iteration failed beyond recovery (non-SPD
    covariance after regularization, and similar)."""


class FormatError(BlockcsError):
    """A serialized file is corrupt, has an unknown version, or fails its
    checksum."""


class VerificationError(BlockcsError):
    """Re-derived bytes do not match the stored artifact."""
