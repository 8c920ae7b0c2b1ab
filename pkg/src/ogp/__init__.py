"""Overlap-gap tools for diluted and mean-field K-spin max-cut models."""

from .errors import (
    DepthError,
    DimensionError,
    DomainError,
    InfeasibleError,
    InsufficientDataError,
    InvalidArityError,
    InvalidOrderParameterError,
    InvalidSizeError,
    OgpError,
    ParameterError,
    ResourceError,
)
from .io import __version__

__all__ = [
    "DepthError",
    "DimensionError",
    "DomainError",
    "InfeasibleError",
    "InsufficientDataError",
    "InvalidArityError",
    "InvalidOrderParameterError",
    "InvalidSizeError",
    "OgpError",
    "ParameterError",
    "ResourceError",
    "__version__",
]
