"""Exception hierarchy for the package.

CLI exit-code contract: ConfigError maps to exit code 2, every other
BeamtomoError to exit code 1.
"""


class BeamtomoError(Exception):
    """Base class for all package errors."""


class ConfigError(BeamtomoError):
    """Invalid, missing, or inconsistent configuration."""


class ContractViolation(BeamtomoError):
    """An operation received input violating its documented precondition."""


class GeometryError(BeamtomoError):
    pass


class OutOfDomainError(GeometryError):
    """Point lies outside the extended domain."""


class ExtrapolationError(OutOfDomainError):
    """Gridded field evaluated beyond its sampled footprint."""


class IntegrationError(BeamtomoError):
    """ODE integration violated a hard tolerance (e.g. energy drift)."""


class TrappedRayError(IntegrationError):
    """Ray exceeded the trapping guard without reaching the boundary."""

    def __init__(self, message, indices=None):
        super().__init__(message)
        # fan indices of the offending rays, when traced in a batch
        self.indices = list(indices) if indices is not None else []


class SynthesisError(BeamtomoError):
    """Dataset-level synthesis failure; carries the failing source list."""

    def __init__(self, message, sources=None):
        super().__init__(message)
        self.sources = list(sources) if sources is not None else []


class BeamBreakdownError(BeamtomoError):
    """Im M lost positive-definiteness transversally (caustic)."""

    def __init__(self, message, s=None):
        super().__init__(message)
        self.s = s


class ExtractionError(BeamtomoError):
    """Too many rays flagged while extracting ray integrals."""


class SolverError(BeamtomoError):
    """Linear solver diverged; carries the residual history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
