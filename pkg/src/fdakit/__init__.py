"""fdakit: functional data analysis on dense and sparse curve samples."""

__version__ = "0.1.0"

from .exceptions import (DegenerateError, DimensionError, FdaError, InputError, InsufficientSampleError,
                         InvalidBasisError, InvalidGridError, NoNeighborsError, NumericalError,
                         OutOfDomainError, RankDeficiencyError, SeparationError)
from .fdcore import (FunctionalSample, Grid, SparseFunctionalSample, derivative, inner_product, l2_distance,
                     l2_norm, trapezoid_weights)

__all__ = [
    "__version__",
    "FdaError", "InputError", "InvalidGridError", "DimensionError", "InvalidBasisError", "OutOfDomainError",
    "InsufficientSampleError", "NumericalError", "RankDeficiencyError", "DegenerateError", "SeparationError",
    "NoNeighborsError",
    "Grid", "FunctionalSample", "SparseFunctionalSample", "trapezoid_weights", "inner_product", "l2_norm",
    "l2_distance", "derivative",
]
