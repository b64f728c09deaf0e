"""Exception hierarchy shared across the engine.

The CLI maps these onto process exit codes, so new error types should
subclass one of the four categories below rather than raising bare
exceptions.
"""

from __future__ import annotations


class AutoSeqError(Exception):
    """Base class for all engine errors."""


class UsageError(AutoSeqError):
    """Bad command line, bad config file, contradictory options."""


class DataError(AutoSeqError):
    """Problems with datasets, mappings, templates, or persisted artifacts."""


class BackendError(AutoSeqError):
    """Model backend failures, including remote transport errors."""


class PipelineStageError(AutoSeqError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
