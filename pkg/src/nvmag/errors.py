"""Exception hierarchy."""


class NVMagError(Exception):
    """Base class for all library errors."""


class NumericalError(NVMagError):
    """A numerical procedure failed (CLI exit code 2)."""


class NonConvergence(NumericalError):
    pass


class Degenerate(NumericalError):
    pass


class PoorLinearity(NumericalError):
    """Slope fit residual too large. ``result`` holds the calibration anyway."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class UnstableFilter(NumericalError):
    pass


class ZeroReference(NumericalError):
    pass


class InputError(NVMagError, ValueError):
    """Invalid input data or configuration (CLI exit code 1)."""


class LengthMismatch(InputError):
    pass


class RateMismatch(InputError):
    pass


class MissingSlope(InputError):
    pass


class EmptyStream(InputError):
    pass


class ConfigError(InputError):
    pass


class UnitMismatch(NVMagError, TypeError):
    pass
