"""Exception hierarchy shared by all fdakit modules."""


class FdaError(ValueError):
    """Base class for all fdakit errors."""


class InputError(FdaError):
    """Invalid or inconsistent user input (bad grid, wrong shapes, ...)."""


class InvalidGridError(InputError):
    pass


class DimensionError(InputError):
    pass


class InvalidBasisError(InputError):
    pass


class OutOfDomainError(InputError):
    pass


class InsufficientSampleError(InputError):
    pass


class NumericalError(FdaError):
    """A numerically degenerate problem (singular systems, empty kernels)."""


class RankDeficiencyError(NumericalError):
    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class DegenerateError(NumericalError):
    pass


class SeparationError(NumericalError):
    pass


class NoNeighborsError(NumericalError):
    pass
