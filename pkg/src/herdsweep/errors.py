"""Exception hierarchy shared by every module."""


class HerdError(Exception):
    """Base class for library errors."""


class DomainError(HerdError, ValueError):
    """Argument outside the domain where an operation is defined."""


class SingularityError(HerdError):
    """A point came within the guard radius of the agent."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class NumericError(HerdError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PreconditionError(HerdError, ValueError):
    """Inputs violate a stated precondition (bad geometry, divergent constant)."""


class TheoryGateError(PreconditionError):
    """The scare function fails the hypothesis a pipeline relies on."""


class SynthesisError(HerdError):
    """A control could not be constructed."""


class AdmissibilityError(HerdError):
    """The agent touched the evolving set."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time
