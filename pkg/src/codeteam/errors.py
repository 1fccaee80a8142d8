"""Exception types shared across the package."""


class CodeTeamError(Exception):
    """Base class for every package-specific error."""


class ConfigError(CodeTeamError):
    """Invalid configuration: endpoints, auth sources, templates, run options."""


class BackendError(CodeTeamError):
    """A chat backend failed after exhausting its retry budget."""


class RateLimited(BackendError):
    """The remote endpoint kept rate-limiting us past the retry budget."""


class NoCodeFound(CodeTeamError):
    """A message expected to carry code contained no usable code block."""


class MissingPrerequisite(CodeTeamError):
    """A stage was stepped before its prerequisite outputs existed."""


class IncompleteContext(CodeTeamError):
    """A prompt was rendered without a required context element."""


class RoleFailure(CodeTeamError):
    """A role produced unparseable output after the configured retry budget."""


class FormatError(CodeTeamError):
    """A benchmark file record did not match the expected shape."""


class MissingSignature(CodeTeamError):
    """A task cannot supply the function signature the prompt setting needs."""


class DomainError(CodeTeamError):
    """Arguments outside the mathematical domain of an estimator."""


class SchemaError(CodeTeamError):
    """A persisted record carries an unsupported schema version."""
