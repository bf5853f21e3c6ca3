"""Exception hierarchy shared by every stage of the beam-selection pipeline."""


class BeamselectError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(BeamselectError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class MeasurementError(BeamselectError):
    """A pattern metric could not be measured on the supplied cut."""


class NullPlacementError(DomainError):
    """Requested null falls inside the main lobe."""


class ResourceError(BeamselectError):
    """A request would allocate an unreasonable amount of memory."""


class OptimizationFailure(BeamselectError):
    """No candidate reached a finite cost.

    The best-effort result (possibly ``None``) is kept on ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class TrainingDivergence(BeamselectError):
    """Training loss became non-finite; ``checkpoint`` holds the last finite weights."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class ConfigurationError(BeamselectError):
    """Inconsistent models, missing artifacts, or an invalid configuration."""


class ArtifactIntegrityError(BeamselectError):
    """An artifact on disk does not match the hash recorded in the manifest."""


class ParseError(BeamselectError, ValueError):
    """A file could not be parsed; the message carries line/field context."""
