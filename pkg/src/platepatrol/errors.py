class StageError(Exception):
    """A pipeline stage failed; ``stage`` tags where (decode, detect, ocr, format, lmm)."""

    stage = "pipeline"

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


class NoPlateFound(StageError):
    stage = "detect"


class NoCharacters(StageError):
    stage = "ocr"


class AnnotationMissing(StageError):
    stage = "detect"


class UpstreamError(StageError):
    """The multimodal model endpoint could not produce an answer."""

    stage = "lmm"

    def __init__(self, message: str, status: int | None = None, attempts: int = 0):
        super().__init__(message)
        self.status = status
        self.attempts = attempts
