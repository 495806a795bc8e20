"""Exception hierarchy shared by all modules."""


class WordharvestError(Exception):
    """Base class for errors raised by this package."""


class DomainError(WordharvestError):
    """Input violates a domain precondition (empty image, unknown glyph, ...)."""


class ParameterError(WordharvestError):
    """A parameter is outside its legal range."""


class ConfigMismatchError(WordharvestError):
    """Artifacts built under different configurations were combined."""


class NotTrainedError(WordharvestError):
    """An operation requires a trained model that does not exist."""


class ConflictError(WordharvestError):
    """A label batch contradicts itself and cannot be applied."""


class MigrationError(WordharvestError):
    """Persisted files carry an unsupported schema version."""


class UnknownTokenError(WordharvestError):
    """A download token that was never issued."""


class ExpiredTokenError(WordharvestError):
    """A download token presented at or after its expiry time."""
