"""Exception types shared across the package."""


class TVCSError(Exception):
    """Base class for package errors."""


class InvalidParameters(TVCSError, ValueError):
    """Arguments are malformed or violate a stated precondition."""


class ResolutionTooCoarse(InvalidParameters):
    """The grid cannot resolve all jumps of a piecewise constant function."""


class NoJumps(InvalidParameters):
    """A separation constant was requested for a signal without jumps."""


class SeparationTooSmall(InvalidParameters):
    """The jump set is not separated enough for the extended-support construction."""


class DimensionError(InvalidParameters):
    """Array shapes do not match."""


class NumericalFailure(TVCSError, RuntimeError):
    """A numerical routine did not reach its tolerance."""
