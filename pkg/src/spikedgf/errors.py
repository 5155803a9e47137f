"""Exception types raised across the package."""


class SpikedGFError(Exception):
    """Base class for all package errors."""


class SamplingError(SpikedGFError):
    pass


class NotPositiveDefiniteError(SpikedGFError, ValueError):
    pass


class ManifoldError(SpikedGFError, ValueError):
    """A matrix that should lie on the normalized Stiefel manifold does not."""


class BudgetError(SpikedGFError):
    """Requested noise tensor exceeds the configured memory budget."""


class IntegrationError(SpikedGFError):
    """Raised when a flow produces non-finite values.

    The last finite state is kept on ``last_state`` (and ``trajectory`` when a
    partial recording exists) so callers can still inspect it.
    """

    def __init__(self, message, last_state=None, trajectory=None):
        super().__init__(message)
        self.last_state = last_state
        self.trajectory = trajectory


class ReductionBreakdownError(IntegrationError):
    """The correlation-only system left the unit operator-norm ball."""


class AmbiguousSelectionError(SpikedGFError, ValueError):
    pass


class DomainError(SpikedGFError, ValueError):
    """A closed-form predictor was evaluated outside its domain.

    ``limit`` carries the offending boundary (blow-up time, initial value).
    """

    def __init__(self, message, limit=None):
        super().__init__(message)
        self.limit = limit


class ConfigError(SpikedGFError, ValueError):
    pass
