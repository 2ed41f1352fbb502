"""Exception types shared across the package."""


class HeadstartError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(HeadstartError):
    """Operands have incompatible shapes or sizes."""


class NotSymmetricError(HeadstartError):
    """A matrix required to be symmetric is not, beyond tolerance."""


class NotPositiveDefiniteError(HeadstartError):
    """Cholesky factorization failed even after jitter escalation."""


class EigenFailureError(HeadstartError):
    """Symmetric eigendecomposition did not converge."""


class EmptyInputError(HeadstartError):
    """An operation received an empty vector, sample set, or log."""


class NonFiniteValueError(HeadstartError):
    """A value that must be finite is NaN or infinite."""


class InvalidLabelError(HeadstartError):
    """A class label is negative or outside the valid range."""


class BadMagicError(HeadstartError):
    """A binary file does not start with the expected magic bytes."""


class DataFormatError(HeadstartError):
    """A feature or checkpoint file is malformed beyond its magic bytes."""


class NotEnoughClassesError(HeadstartError):
    """The dataset has fewer classes than the requested task schedule."""


class MissingClassError(HeadstartError):
    """A class in the contiguous label range has no samples."""


class BiasCoordinateError(HeadstartError):
    """A bias-extended feature row does not end in exactly 1."""


class ZeroNormError(HeadstartError):
    """A matrix that must be normalized has zero Frobenius norm."""


class NotOneHotError(HeadstartError):
    """A target column is not a one-hot indicator vector."""


class UnknownClassError(HeadstartError):
    """A requested class id is not covered by the given statistics."""


class NonContiguousClassesError(HeadstartError):
    """New class ids do not extend the head's contiguous class range."""


class MissingStatsError(HeadstartError):
    """A data-driven initializer was invoked without class statistics."""


class NonFiniteGradientError(HeadstartError):
    """An optimizer step received a gradient with NaN or infinite entries."""


class GridMismatchError(HeadstartError):
    """Two evaluation logs do not share the same task/checkpoint grid."""
