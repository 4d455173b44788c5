"""Exception types raised across the package."""


class HangstringError(Exception):
    pass


class InvalidMesh(HangstringError, ValueError):
    pass


class InvalidWeight(HangstringError, ValueError):
    pass


class UnsupportedOrder(HangstringError, ValueError):
    pass


class InsufficientJet(HangstringError, ValueError):
    pass


class InvalidGamma(HangstringError, ValueError):
    pass


class SolverFailure(HangstringError, RuntimeError):
    pass


class StepFailure(HangstringError, RuntimeError):
    def __init__(self, message, t=None, diagnostics=None):
        super().__init__(message if t is None else f"{message} (t={t:.6g})")
        self.t = t
        self.diagnostics = diagnostics or {}


class InvalidGravity(HangstringError, ValueError):
    pass


class UndefinedRatio(HangstringError, ValueError):
    pass


class CalibrationFailure(HangstringError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(HangstringError, ValueError):
    pass


class NonContraction(HangstringError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
