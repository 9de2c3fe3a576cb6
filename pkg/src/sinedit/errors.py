"""Exception hierarchy shared across the package."""


class SineditError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SineditError, ValueError):
    """A caller-supplied image, mask, or vector violates a precondition."""


class InvalidConfigError(SineditError, ValueError):
    """A configuration value is out of its allowed range."""


class InvalidRequestError(SineditError, ValueError):
    """An edit request is missing or mis-specifying a field.

    ``field`` names the offending field so CLIs and services can surface
    field-level messages.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class TrainingDivergedError(SineditError, RuntimeError):
    """Training produced a non-finite loss; carries the offending step."""

    def __init__(self, step: int, message: str = "loss became non-finite"):
        super().__init__(f"step {step}: {message}")
        self.step = step


class GuidanceError(SineditError, RuntimeError):
    """Guidance failed mid-sampling; carries scale/timestep context."""

    def __init__(self, message: str, scale: int | None = None, timestep: int | None = None):
        ctx = ""
        if scale is not None:
            ctx = f" (scale={scale}, t={timestep})"
        super().__init__(message + ctx)
        self.scale = scale
        self.timestep = timestep


class CheckpointError(SineditError):
    """Base for checkpoint persistence failures."""


class CheckpointCorruptError(CheckpointError):
    """The file is not a readable checkpoint container."""


class CheckpointVersionError(CheckpointError):
    """The container version is not supported by this build."""


class DigestMismatchError(CheckpointError):
    """The checkpoint was trained on a different source image."""


class EmbedderUnavailableError(SineditError, RuntimeError):
    """A configured live embedder cannot be constructed. Never silently
    replaced by a fallback; the caller must choose an available one."""


class DegenerateEnsembleError(SineditError, ValueError):
    """Prompt embeddings cancelled out; the ensemble has no direction."""


class JobCancelledError(SineditError, RuntimeError):
    """Raised inside a compute job when cancellation was requested."""
