"""Exception types raised across the package."""


class InvalidDimensionError(ValueError):
    """A matrix/grid dimension is zero, negative, or does not match."""


class InvalidChannelError(ValueError):
    """A path set cannot be represented on the sampling grid."""


class SingularMatrixError(ValueError):
    """A linear system has no unique solution."""


class DatasetFormatError(ValueError):
    """Base class for dataset and model file problems."""


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""
