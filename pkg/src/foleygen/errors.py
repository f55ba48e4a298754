"""Exception hierarchy shared across the package.

Every error raised by foleygen derives from :class:`FoleyError` so callers can
catch one base class at the CLI boundary. Subclasses double as the standard
library types users expect (``ValueError`` for bad arguments, ``OSError`` for
codec trouble).
"""


class FoleyError(Exception):
    """Base class for all foleygen errors."""


class InvalidArgument(FoleyError, ValueError):
    """A precondition on an argument was violated."""


class ShapeError(InvalidArgument):
    """Operand shapes are incompatible. Lists both shapes."""

    def __init__(self, message, shape_a=None, shape_b=None):
        if shape_a is not None or shape_b is not None:
            message = f"{message}: {tuple(shape_a)} vs {tuple(shape_b)}"
        super().__init__(message)
        self.shape_a = tuple(shape_a) if shape_a is not None else None
        self.shape_b = tuple(shape_b) if shape_b is not None else None


class NumericFault(FoleyError, ArithmeticError):
    """A non-finite value (NaN/Inf) appeared in a tensor operation."""


class CodecError(FoleyError, OSError):
    """A binary container or WAV file could not be decoded.

    ``offset`` is the byte position at which decoding failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IngestError(FoleyError, OSError):
    """A frame directory or image file could not be ingested."""


class BankError(FoleyError, KeyError):
    """A class-spectrogram bank is missing or malformed for a class."""

    def __str__(self):
        # KeyError repr()s its message; keep it readable.
        return self.args[0] if self.args else ""


class ConfigError(FoleyError, ValueError):
    """A configuration value is inconsistent or incompatible."""


class AlignmentError(FoleyError, ValueError):
    """Timestep counts of residuals and targets cannot be reconciled."""


class UndefinedCorrelationError(FoleyError, ValueError):
    """Cross-correlation is undefined (zero-energy input)."""


class SplitError(FoleyError, ValueError):
    """A dataset split does not cover the classes an operation needs."""
