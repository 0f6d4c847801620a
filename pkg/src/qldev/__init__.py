"""Quantum Fisher informations, large-deviation estimation and Schur-Weyl measurement tools."""

from .errors import CapacityError, EstimationError, QLDevError, ValidationError

__version__ = "0.1.0"

__all__ = ["QLDevError", "ValidationError", "CapacityError", "EstimationError", "__version__"]
