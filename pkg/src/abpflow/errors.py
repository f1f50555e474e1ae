"""Exception types shared across the package."""


class AbpflowError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(AbpflowError):
    """Invalid or unknown configuration input."""


class DegenerateState(AbpflowError):
    """A field violates strict admissibility (f <= 0 or rho >= 1).

    Carries the worst offending node and value when available.
    """

    def __init__(self, message, node=None, value=None):
        super().__init__(message)
        self.node = node
        self.value = value


class NonPositiveDelta(AbpflowError):
    """Gajewski regularization parameter must be > 0."""


class WidthTooLarge(AbpflowError):
    """Mollifier kernel width must be < 2*pi."""


class BlowupDetected(AbpflowError):
    """Non-finite or exploding state during time integration."""

    def __init__(self, message, t=None, max_abs=None):
        super().__init__(message)
        self.t = t
        self.max_abs = max_abs


class StepsizeUnderflow(AbpflowError):
    """Adaptive step fell below 1e-12 * T."""


class FactorizationFailure(AbpflowError):
    """Mass matrix lost symmetric positive definiteness."""


class NoContraction(AbpflowError):
    """Fixed-point iteration ratios >= 1 for three consecutive passes."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MismatchedTrajectories(AbpflowError):
    """Trajectory pair disagrees in grid or snapshot times."""
