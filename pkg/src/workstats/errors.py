"""Exception hierarchy shared by the engines and the CLI."""


class WorkstatsError(Exception):
    """Base class for every error raised by this package."""


class CapExceeded(WorkstatsError):
    """Dense construction would exceed the configured number of sites."""


class NotHermitian(WorkstatsError):
    pass


class DimensionMismatch(WorkstatsError):
    pass


class ConvergenceFailure(WorkstatsError):
    pass


class InsufficientOrder(WorkstatsError):
    pass


class StepTooSmall(WorkstatsError):
    """Finite-difference result is dominated by round-off."""


class TruncationNotConverged(WorkstatsError):
    pass


class SupportViolation(WorkstatsError):
    """Relative entropy is infinite: rho has weight outside the support of sigma."""


class GaplessMode(WorkstatsError):
    pass


class LevelNotCrossed(WorkstatsError):
    pass


class RootBracketFailure(WorkstatsError):
    pass


class ConfigInvalid(WorkstatsError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class EngineMismatch(WorkstatsError):
    pass
