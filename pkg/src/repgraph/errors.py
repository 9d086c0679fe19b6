"""Exception types raised across the package."""


class RepgraphError(Exception):
    """Base class for all package errors."""


class ParseError(RepgraphError, ValueError):
    """A malformed input row. ``lineno`` is 1-based and counts the header."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class AlphabetError(ParseError):
    """Residues outside the configured alphabet."""


class DuplicateKeyError(RepgraphError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class EmptyInputError(RepgraphError, ValueError):
    pass


class ImputationError(RepgraphError, ValueError):
    pass


class InvalidParameterError(RepgraphError, ValueError):
    """Argument outside an operation's domain (shapes, non-positive sizes, ...)."""


class EmptyShingleError(RepgraphError, ValueError):
    pass


class IncompatibleError(RepgraphError, ValueError):
    """Two objects that must agree in length/dimension do not."""


class BandingMismatchError(RepgraphError, ValueError):
    pass


class InvalidDistributionError(RepgraphError, ValueError):
    pass


class InfeasibleError(RepgraphError, ValueError):
    pass


class DegenerateInputError(RepgraphError, ValueError):
    pass


class SizeLimitError(RepgraphError, ValueError):
    pass


class SpecError(RepgraphError, ValueError):
    """Invalid synthetic-data specification."""


class ConfigError(RepgraphError, ValueError):
    """Pipeline configuration failed validation."""


class StageError(RepgraphError):
    """A pipeline stage failed; carries the stage name and the partial manifest."""

    def __init__(self, stage: str, cause: BaseException, manifest=None):
        self.stage = stage
        self.cause = cause
        self.manifest = manifest
        super().__init__(f"stage '{stage}' failed: {cause}")
