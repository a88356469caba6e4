"""Exception hierarchy shared by every kdlnet module."""


class KdlError(Exception):
    """Base class for all library errors."""


class ShapeError(KdlError, ValueError):
    """Operand shapes do not conform."""


class ParameterError(KdlError, ValueError):
    """An argument is outside its admissible range."""


class NumericError(KdlError, ArithmeticError):
    """Non-convergence or a non-finite value was produced.

    Keyword context (``iterations``, ``epoch``, ``batch``, ``sample`` ...) is
    kept as attributes for callers that want to report it.
    """

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context
        for key, value in context.items():
            setattr(self, key, value)


class ParseError(KdlError, ValueError):
    """Malformed input text, such as an architecture string or a CSV row."""

    def __init__(self, message, offset=None, expected=None):
        self.offset = offset
        self.expected = tuple(expected or ())
        detail = message
        if offset is not None:
            detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class FormatError(KdlError, ValueError):
    """A binary file does not follow its declared layout."""


class StateError(KdlError, RuntimeError):
    """Cached forward state does not match the network it is used with."""
