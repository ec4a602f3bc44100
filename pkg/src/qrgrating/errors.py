"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures to
its documented status codes (1 usage, 2 config, 3 numerical).
"""


class QRError(Exception):
    exit_code = 1


class InvalidMode(QRError, ValueError):
    """Unknown coupling formula mode or other enumerated option."""


class DomainError(QRError, ValueError):
    """A function was evaluated outside its domain."""


class InconsistentSpec(QRError, ValueError):
    """Beam temperature and wavelength disagree."""


class ConfigError(QRError):
    exit_code = 2


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ValidationError(ConfigError):
    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class UnitError(ConfigError):
    pass


class NumericalError(QRError):
    exit_code = 3


class NoMatchingPoint(NumericalError):
    """No sign change of the Morse/Casimir matching residual inside the bracket."""


class NonConvergence(NumericalError):
    pass


class NumericalBlowup(NumericalError):
    pass


class IllConditionedMatch(NumericalError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class CalibrationFailed(NumericalError):
    pass


class FitRefused(NumericalError):
    """Too few points for a threshold-slope fit."""
