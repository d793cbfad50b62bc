"""Exception hierarchy shared by every module of the lab."""


class LabError(Exception):
    pass


class DomainError(LabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(LabError, ValueError):
    """An operation was called with structurally invalid input."""


class SingularityError(DomainError):
    pass


class IntegrationError(LabError, RuntimeError):
    """A numerical integrator left its safe region (overflow, blow-up)."""


class SolverError(LabError, RuntimeError):
    pass


class StepSizeError(IntegrationError):
    pass


class ValidationError(UsageError):
    """Configuration validation failure; ``keys`` lists the offending keys."""

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = list(keys)
