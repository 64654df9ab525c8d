"""Exception hierarchy shared across the toolkit.

Every error carries a ``category`` string that the CLI maps to a stable
exit code and a ``error[<category>]`` prefix, so batch callers can tell
configuration mistakes from malformed data without parsing messages.
"""


class GestureLabError(Exception):
    category = "error"


class ConfigError(GestureLabError):
    """Bad invocation: missing column roles, unknown keys, invalid flags."""

    category = "config"


class ParseError(GestureLabError):
    """Malformed input content (always names the offending line)."""

    category = "parse"

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ValidationError(GestureLabError):
    """Well-formed input that violates a domain invariant."""

    category = "validation"


class VocabularyError(ValidationError):
    category = "vocabulary"


class ShapeError(GestureLabError):
    """Array dimensions do not chain or do not match declared sizes."""

    category = "shape"


class FormatError(GestureLabError):
    """A binary or structured file does not match its declared layout."""

    category = "format"


class AlignmentError(GestureLabError):
    """Two data sources that must describe the same clips disagree."""

    category = "alignment"
