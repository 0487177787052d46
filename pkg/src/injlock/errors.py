"""Exception hierarchy shared by every stage of the toolkit."""


class InjlockError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(InjlockError, ValueError):
    pass


class EmptyInputError(InjlockError, ValueError):
    pass


class NormalizationError(ParameterError):
    pass


class DegenerateProfileError(ParameterError):
    pass


class AnalysisError(InjlockError):
    """Raised when a measurement cannot be turned into a result."""


class UndefinedPhaseError(AnalysisError):
    pass


class WindowSelectionError(AnalysisError):
    pass


class FitError(AnalysisError):
    pass


class NonConvergenceError(FitError):
    """The damped least-squares loop hit its iteration cap.

    ``best`` holds the best-so-far :class:`~injlock.circfit.FitResult`.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class BootstrapUnstableError(AnalysisError):
    pass


class ThresholdNotFoundError(AnalysisError):
    pass


class WaveformParseError(InjlockError):
    """Malformed waveform file. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
