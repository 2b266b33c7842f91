"""Exception hierarchy shared across the package."""


class FormationError(Exception):
    """Base class for every error raised by this package."""


class InvalidTopologyError(FormationError):
    pass


class ShapeError(FormationError, ValueError):
    pass


class UnsupportedSpecError(FormationError):
    pass


class ProtocolError(FormationError):
    """A reading required by the update rule is missing."""


class ConfigurationError(FormationError):
    """Invalid scenario or attack configuration.

    ``field`` names the offending config key (dotted path) when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class CalibrationError(FormationError):
    pass


class MetricError(FormationError):
    pass


class NotSchurError(FormationError):
    def __init__(self, message, spectral_radius):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class CertificateInapplicableError(FormationError):
    pass


class DecreaseViolation(FormationError):
    """A sampled error state failed to strictly decrease the Lyapunov function."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state
