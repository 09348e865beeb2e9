"""Exception hierarchy shared by all qnav modules."""


class QnavError(Exception):
    """Base class for every error raised by qnav."""


class AllZeroInput(QnavError, ValueError):
    """Amplitude encoding of an all-zero weighted input (cannot normalize)."""


class CapacityExceeded(QnavError, ValueError):
    """More sensor components than basis states available."""


class ShapeMismatch(QnavError, ValueError):
    """Parameter or frame shapes disagree with each other."""


class StepAfterDone(QnavError, RuntimeError):
    """``step`` was called on a finished episode."""


class NonFiniteGradient(QnavError, FloatingPointError):
    """A gradient contained NaN or Inf; the update was aborted."""


class ConfigError(QnavError, ValueError):
    """Invalid configuration value; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message
