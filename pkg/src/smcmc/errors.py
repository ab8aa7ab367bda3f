"""Exception hierarchy shared by all modules."""


class SMCMCError(Exception):
    """Base class for every error raised by this package."""


class InvalidGeometryError(SMCMCError, ValueError):
    pass


class ModelError(SMCMCError, ValueError):
    """Raised when a model cannot be constructed from its parameters."""


class DomainError(SMCMCError, ValueError):
    """An argument lies outside the domain of a density or special function."""


class FlowError(SMCMCError):
    pass


class FlowDegenerateError(FlowError):
    """The innovation matrix (or C itself) could not be factorized."""

    def __init__(self, lam, message="singular innovation covariance"):
        self.lam = lam
        super().__init__(f"{message} at lambda={lam:.6g}")


class FlowDivergedError(FlowError):
    pass


class DegenerateEnsembleError(SMCMCError):
    """All importance weights of a particle ensemble vanished."""


class ConfigError(SMCMCError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class ReportError(SMCMCError):
    pass
