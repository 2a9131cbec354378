"""Exception hierarchy shared by every isogauge module."""


class IsogaugeError(ValueError):
    """Base class for all errors raised by isogauge."""


class InvalidInput(IsogaugeError):
    pass


class NotPSD(IsogaugeError):
    pass


class DegenerateInput(IsogaugeError):
    pass


class ZeroVector(IsogaugeError):
    def __init__(self, index, axis="row", context=""):
        self.index = index
        self.axis = axis
        msg = f"zero {axis} at index {index}"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class NotSquareIntegrable(IsogaugeError):
    pass


class DegenerateActivation(IsogaugeError):
    pass


class BoundInapplicable(IsogaugeError):
    pass


class NonFiniteActivation(IsogaugeError):
    pass


class ConfigError(IsogaugeError):
    pass


class ParseError(IsogaugeError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
