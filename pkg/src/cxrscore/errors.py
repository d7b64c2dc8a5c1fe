"""Exception hierarchy shared across the package."""


class CxrScoreError(Exception):
    """Base class for all package errors."""


class InvalidInputError(CxrScoreError, ValueError):
    pass


class EmptyMaskError(CxrScoreError):
    """Raised when a lung mask has no foreground pixels."""


class SchemaError(CxrScoreError, ValueError):
    """Input table or feature vector does not match the expected columns."""


class ModelLoadError(CxrScoreError):
    pass


class ModelFileNotFoundError(ModelLoadError, FileNotFoundError):
    pass


class TensorMismatchError(ModelLoadError):
    pass


class MissingLabelsError(ModelLoadError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("pathology model is missing required labels: " + ", ".join(self.missing))


class InferenceError(CxrScoreError):
    pass


class ScoreRangeError(CxrScoreError, ValueError):
    """External score falls outside its declared range."""
