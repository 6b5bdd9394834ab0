"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""

    code = "EngineError"


class UnsupportedFormat(EngineError):
    code = "UnsupportedFormat"


class EmptyDocument(EngineError):
    code = "EmptyDocument"


class EmptyText(EngineError):
    code = "EmptyText"


class EmptyQuestion(EngineError):
    code = "EmptyQuestion"


class MalformedJson(EngineError):
    code = "MalformedJson"


class NotAnObject(EngineError):
    code = "NotAnObject"


class ProviderUnavailable(EngineError):
    code = "ProviderUnavailable"


class ProviderMismatch(EngineError):
    code = "ProviderMismatch"


class DimensionMismatch(EngineError):
    code = "DimensionMismatch"


class ZeroVector(EngineError):
    code = "ZeroVector"


class InvariantViolation(EngineError):
    code = "InvariantViolation"


class VersionMismatch(EngineError):
    code = "VersionMismatch"


class CorruptSnapshot(EngineError):
    code = "CorruptSnapshot"


class UnknownSession(EngineError):
    code = "UnknownSession"


class ConfigError(EngineError):
    code = "ConfigError"


class WatchDirMissing(EngineError):
    code = "WatchDirMissing"


class PromptBudgetError(EngineError):
    code = "PromptBudgetError"


class StageError(EngineError):
    """Wraps a failure inside the ingestion pipeline with the stage name."""

    code = "StageError"

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
