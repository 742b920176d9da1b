"""Error hierarchy and mapping from exceptions to CLI exit codes."""

import logging

from jtft.constants import EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE, EXIT_GRADCHECK

logger = logging.getLogger("jtft.errors")


class JtftError(Exception):
    """Base error carrying a user-facing message and a raw detail string."""

    def __init__(self, user_message: str, detail: str = "") -> None:
        super().__init__(user_message)
        self.user_message = user_message
        self.detail = detail


class DimensionError(JtftError):
    """Tensor shapes do not agree."""


class ParameterError(JtftError):
    """A numeric parameter is outside its valid range."""


class UsageError(JtftError):
    """An API was called in the wrong state."""


class InvalidCheckError(UsageError):
    """A gradient check was requested on a non-deterministic function."""


class ConfigError(JtftError):
    """Experiment or model configuration is invalid."""


class CheckpointError(ConfigError):
    """Checkpoint archive is unreadable, corrupted or of an unsupported version."""


class DataError(JtftError):
    """Input data is missing, malformed or too short."""


class DivergenceError(JtftError):
    """Optimization produced a non-finite loss."""


class GradcheckError(JtftError):
    """Analytic and numeric gradients disagree."""


# Maps error classes to (exit code, hint). Most specific classes first.
EXIT_CODES: list[tuple[type[BaseException], int, str]] = [
    (CheckpointError, EXIT_CONFIG, "Re-create the checkpoint with `jtft train`."),
    (ConfigError, EXIT_CONFIG, "Check the experiment file and --section.key overrides."),
    (DataError, EXIT_DATA, "Check the dataset path, its columns and the split lengths."),
    (FileNotFoundError, EXIT_DATA, "Check that the file exists."),
    (DivergenceError, EXIT_DIVERGENCE, "Lower the learning rate and retry."),
    (GradcheckError, EXIT_GRADCHECK, ""),
    (JtftError, EXIT_CONFIG, ""),
]


def translate_error(exc: BaseException) -> tuple[int, str, str]:
    """Translate an exception to (exit_code, user_message, raw_detail)."""
    raw_detail = getattr(exc, "detail", "") or str(exc)
    for exc_type, code, hint in EXIT_CODES:
        if isinstance(exc, exc_type):
            message = getattr(exc, "user_message", None) or str(exc)
            if hint:
                message = f"{message} {hint}"
            return code, message, raw_detail
    logger.debug("Untranslated error type %s", type(exc).__name__)
    return EXIT_CONFIG, "An unexpected error occurred.", raw_detail
