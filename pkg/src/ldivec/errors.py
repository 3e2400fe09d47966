"""Exception hierarchy.

Everything that signals bad user input derives from :class:`ValidationError`
so the CLI can map it to exit code 2; numeric breakdowns raise
:class:`NumericalError`.
"""


class LdivecError(Exception):
    """Base class for all package errors."""


class ValidationError(LdivecError, ValueError):
    """Input violates a documented precondition."""


class ArrayFormatError(ValidationError):
    """Malformed ``.ldiv`` array file. ``code`` names the failure."""

    code = "ArrayFormat"


class BadMagic(ArrayFormatError):
    code = "BadMagic"


class UnsupportedVersion(ArrayFormatError):
    code = "UnsupportedVersion"


class UnsupportedDtype(ArrayFormatError):
    code = "UnsupportedDtype"


class Truncated(ArrayFormatError):
    code = "Truncated"


class TrailingBytes(ArrayFormatError):
    code = "TrailingBytes"


class ManifestError(ValidationError):
    """Malformed or inconsistent manifest."""


class DimensionMismatch(ManifestError):
    pass


class InvalidWeights(ValidationError):
    pass


class EmptyClass(ValidationError):
    def __init__(self, lang, label=None):
        self.lang = lang
        name = f" ({label})" if label is not None else ""
        super().__init__(f"language {lang}{name} has no training segments")


class UnlabeledSegment(ValidationError):
    pass


class NumericalError(LdivecError, ArithmeticError):
    pass


class NotPositiveDefinite(NumericalError, ValidationError):
    """A matrix that must be SPD failed its Cholesky factorization."""
