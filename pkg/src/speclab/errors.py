"""Exception types shared across the package."""


class SpeclabError(Exception):
    """Base class for all package-specific errors."""


class StructuralError(SpeclabError):
    """A basis index falls outside every generated block, or blocks overlap."""


class CalculusDomainError(SpeclabError):
    """A functional-calculus shift violates its precondition on some block."""


class GramConditionError(SpeclabError):
    """Gram matrix of a spanning set is too ill-conditioned to trust."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class WindowTooSmallError(SpeclabError):
    """Requested overlap window dimension is smaller than the vector count."""


class AccumulationError(SpeclabError):
    """A spectral-truth query touches an accumulation point of eigenvalues."""


class MisalignedBlocksError(SpeclabError):
    """Two operators do not share the same block index groups."""


class ShiftError(SpeclabError):
    """A spectral shift violates the semi-boundedness precondition."""


class ConfigError(SpeclabError):
    """An experiment configuration failed validation."""
