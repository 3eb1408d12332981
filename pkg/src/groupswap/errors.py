"""Error types shared across the package."""


class ConfigurationError(RuntimeError):
    """Missing or unusable configuration: weight files, dataset roots, config keys."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
