"""Exception types raised by the library.

Every error derives from :class:`OgpError`. The CLI maps
:class:`ResourceError` to exit code 3 and every other error to exit code 2.
"""


class OgpError(Exception):
    pass


class ParameterError(OgpError, ValueError):
    """A numeric parameter violates an operation's precondition."""


class InvalidArityError(ParameterError):
    pass


class InvalidSizeError(ParameterError):
    pass


class DimensionError(OgpError, ValueError):
    pass


class ResourceError(OgpError):
    """The requested computation exceeds a configured size cap."""


class DomainError(OgpError, ValueError):
    """A spatial grid does not cover the region a computation needs."""


class InvalidOrderParameterError(ParameterError):
    """A step function is not a valid (nonnegative, nondecreasing) order parameter."""


class InfeasibleError(OgpError, ValueError):
    pass


class InsufficientDataError(OgpError, ValueError):
    pass


class DepthError(OgpError, ValueError):
    pass
