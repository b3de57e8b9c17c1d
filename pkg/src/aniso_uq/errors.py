"""Exception hierarchy shared by all modules."""


class AnisoUQError(Exception):
    """Base class for every error raised by this package."""


class ResourceError(AnisoUQError):
    """A size guard (mesh level, matrix size, index-set cap, ...) was exceeded."""


class ValidationError(AnisoUQError, ValueError):
    """Invalid user input or configuration."""


class NumericalError(AnisoUQError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class ClassificationError(NumericalError):
    pass


class StructureError(AnisoUQError):
    """Meshes or fields are not compatible (e.g. not nested)."""


class NotPSDError(NumericalError):
    pass


class DomainError(NumericalError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateDirectionError(NumericalError):
    pass


class AssemblyError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
