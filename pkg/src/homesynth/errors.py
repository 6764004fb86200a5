"""Exception and warning types shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for every failure raised by this package."""


class InputError(PipelineError):
    """A precondition on caller-supplied data was violated."""


class ConfigError(PipelineError):
    """The run configuration is missing, malformed, or inconsistent."""


class TransportError(PipelineError):
    """Transient transport failure talking to a backend; safe to retry."""


class BackendError(PipelineError):
    """A backend call failed permanently (retries exhausted or a fatal reply)."""


class GenerationError(PipelineError):
    """Structured generation never produced a valid feature."""

    def __init__(self, message: str, violations: tuple[str, ...] = (), attempts: int = 0):
        super().__init__(message)
        self.violations = tuple(violations)
        self.attempts = attempts


class TemplateError(PipelineError):
    """A simulation template contains an unknown or malformed placeholder."""


class EngineError(PipelineError):
    """The external simulation engine is missing or exited abnormally."""


class EngineParseError(PipelineError):
    """Engine output exists but the expected totals could not be extracted."""


class LabelingError(PipelineError):
    """A text-scoring backend never produced a parseable rating."""


class DegenerateDatasetWarning(UserWarning):
    """Dataset extremes coincide, so relative scores collapse to zero."""
