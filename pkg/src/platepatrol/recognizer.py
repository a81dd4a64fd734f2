"""Backend-agnostic plate recognition: dual-model pipeline and single multimodal call."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from pathlib import Path

from sklearn.base import BaseEstimator

from .detection import DETECTOR_KINDS, DetectionBox, make_detector
from .errors import StageError
from .imaging import ImageDecodeError, crop, ensure_gray, otsu_binarize
from .lmm import LmmClient
from .ocr import OCR_KINDS, make_ocr
from .plates import PlateFormatError, normalize_plate
from .validation import check_image

BACKENDS = ("dual_pipeline", "lmm")
VARIANTS = ("original_roi", "gray_roi", "binary_roi")
_VARIANT_ALIASES = {"original": "original_roi", "gray": "gray_roi", "binary": "binary_roi"}
_BACKEND_ALIASES = {"dual": "dual_pipeline"}


def canonical_variant(name):
    if name is None:
        return None
    return _VARIANT_ALIASES.get(name, name)


@dataclass(frozen=True)
class PipelineConfig:
    backend: str = "dual_pipeline"
    detector: str = "heuristic"
    ocr: str = "baseline"
    variant: str | None = "binary_roi"

    def __post_init__(self):
        backend = _BACKEND_ALIASES.get(self.backend, self.backend)
        object.__setattr__(self, "backend", backend)
        object.__setattr__(self, "variant", canonical_variant(self.variant))
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if backend == "dual_pipeline":
            if self.variant not in VARIANTS:
                raise ValueError(f"dual_pipeline needs a variant in {VARIANTS}, got {self.variant!r}")
            if self.detector not in DETECTOR_KINDS:
                raise ValueError(f"unknown detector {self.detector!r}")
            if self.ocr not in OCR_KINDS:
                raise ValueError(f"unknown ocr {self.ocr!r}")
        elif self.variant is not None:
            raise ValueError("the lmm backend reads the full image; variant must be None")

    @classmethod
    def lmm(cls) -> "PipelineConfig":
        return cls(backend="lmm", variant=None)

    @property
    def model_label(self) -> str:
        """Row label: which model chain, independent of the ROI variant."""
        if self.backend == "lmm":
            return "lmm"
        return f"{self.detector} + {self.ocr}"

    @property
    def column(self) -> str:
        return "original" if self.backend == "lmm" else self.variant

    def summary(self) -> str:
        if self.backend == "lmm":
            return "lmm"
        return f"dual_pipeline/{self.detector}/{self.ocr}/{self.variant}"


@dataclass
class RecognitionResult:
    plate: str | None
    backend: str
    timing: float
    raw_text: str = ""
    attempts: int = 1
    failure: str | None = None
    detail: str | None = None
    box: DetectionBox | None = None

    def __post_init__(self):
        if (self.plate is None) == (self.failure is None):
            raise ValueError("exactly one of plate and failure must be set")

    @property
    def ok(self) -> bool:
        return self.plate is not None

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["box"] = None if self.box is None else asdict(self.box)
        return doc


def apply_variant(roi, variant: str):
    if variant == "original_roi":
        return roi
    if variant == "gray_roi":
        return ensure_gray(roi)
    if variant == "binary_roi":
        return otsu_binarize(roi)
    raise ValueError(f"unknown variant {variant!r}")


def _source_key(source):
    return source if isinstance(source, (str, Path)) else None


class DualPipelineRecognizer(BaseEstimator):
    """Detector then OCR on the cropped ROI, with an optional preprocessing variant.

    ``detector`` and ``ocr`` are kind names or already-built estimators.
    """

    def __init__(self, detector="heuristic", ocr="baseline", variant="binary_roi", atlas=None,
                 detector_params=None, ocr_params=None):
        self.detector = detector
        self.ocr = ocr
        self.variant = variant
        self.atlas = atlas
        self.detector_params = detector_params
        self.ocr_params = ocr_params

    def fit(self, X=None, y=None):
        if isinstance(self.detector, str):
            self.detector_ = make_detector(self.detector, **(self.detector_params or {}))
        else:
            self.detector_ = self.detector
        if isinstance(self.ocr, str):
            params = dict(self.ocr_params or {})
            if self.ocr == "baseline" and self.atlas is not None:
                params.setdefault("atlas", self.atlas)
            self.ocr_ = make_ocr(self.ocr, **params)
        else:
            self.ocr_ = self.ocr
        self.config_ = PipelineConfig("dual_pipeline", getattr(self.detector_, "kind", "external"),
                                      getattr(self.ocr_, "kind", "external"), self.variant)
        return self

    def _finish(self, roi, variant, started, box, summary):
        raw = ""
        try:
            reading = self.ocr_.read(apply_variant(roi, variant))
            raw = reading.text
            plate = normalize_plate(raw)
        except PlateFormatError as exc:
            return RecognitionResult(None, summary, time.perf_counter() - started, raw,
                                     failure="format", detail=str(exc), box=box)
        except StageError as exc:
            return RecognitionResult(None, summary, time.perf_counter() - started, raw,
                                     failure=exc.stage, detail=str(exc), box=box)
        return RecognitionResult(plate, summary, time.perf_counter() - started, raw, box=box)

    def _load_and_detect(self, source, annotation):
        img = check_image(source)
        hint = annotation if annotation is not None else _source_key(source)
        return img, self.detector_.detect(img, hint)

    def recognize(self, source, annotation=None) -> RecognitionResult:
        """Run on a path, encoded bytes, ndarray or Image; timing spans load to result."""
        started = time.perf_counter()
        summary = self.config_.summary()
        try:
            img, box = self._load_and_detect(source, annotation)
            roi = crop(img, box)
        except ImageDecodeError as exc:
            return RecognitionResult(None, summary, time.perf_counter() - started,
                                     failure="decode", detail=str(exc))
        except StageError as exc:
            return RecognitionResult(None, summary, time.perf_counter() - started,
                                     failure=exc.stage, detail=str(exc))
        except ValueError as exc:
            return RecognitionResult(None, summary, time.perf_counter() - started,
                                     failure="detect", detail=str(exc))
        return self._finish(roi, self.variant, started, box, summary)

    def recognize_variants(self, source, variants=VARIANTS, annotation=None) -> dict:
        """Detect once and read every variant from the same ROI.

        Each result's timing covers the shared load/detect time plus its own
        variant and OCR time.
        """
        started = time.perf_counter()
        try:
            img, box = self._load_and_detect(source, annotation)
            roi = crop(img, box)
        except (StageError, ValueError) as exc:
            stage = getattr(exc, "stage", "decode" if isinstance(exc, ImageDecodeError) else "detect")
            elapsed = time.perf_counter() - started
            return {v: RecognitionResult(None, self._summary_for(v), elapsed, failure=stage, detail=str(exc))
                    for v in variants}
        shared = time.perf_counter() - started
        out = {}
        for v in map(canonical_variant, variants):
            t = time.perf_counter()
            res = self._finish(roi, v, t, box, self._summary_for(v))
            res.timing += shared
            out[v] = res
        return out

    def _summary_for(self, variant):
        cfg = self.config_
        return PipelineConfig(cfg.backend, cfg.detector, cfg.ocr, variant).summary()

    def predict(self, X):
        return [self.recognize(x).plate for x in _as_sources(X)]

    def score(self, X, y):
        preds = self.predict(X)
        return sum(p == t for p, t in zip(preds, y)) / len(preds)


class LmmRecognizer(BaseEstimator):
    """Full-image plate reading through an :class:`LmmClient`."""

    def __init__(self, client=None, endpoint=None, model_id="gpt-4o", api_key_env="OPENAI_API_KEY",
                 timeout=30.0, max_attempts=8):
        self.client = client
        self.endpoint = endpoint
        self.model_id = model_id
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_attempts = max_attempts

    def fit(self, X=None, y=None):
        if self.client is not None:
            self.client_ = self.client
        else:
            from .lmm import DEFAULT_ENDPOINT
            from .retry import RetryPolicy

            self.client_ = LmmClient(self.endpoint or DEFAULT_ENDPOINT, self.model_id, self.api_key_env,
                                     self.timeout, RetryPolicy(max_attempts=self.max_attempts))
        self.config_ = PipelineConfig.lmm()
        return self

    def recognize(self, source, annotation=None) -> RecognitionResult:
        started = time.perf_counter()
        summary = self.config_.summary()
        try:
            if isinstance(source, (str, Path)):
                source = Path(source).read_bytes()
            if isinstance(source, (bytes, bytearray)):
                check_image(bytes(source))
            resp = self.client_.recognize(source)
        except (ImageDecodeError, OSError, TypeError) as exc:
            return RecognitionResult(None, summary, time.perf_counter() - started,
                                     failure="decode", detail=str(exc), attempts=0)
        elapsed = time.perf_counter() - started
        if resp.ok:
            return RecognitionResult(resp.normalized, summary, elapsed, resp.raw_text or "", resp.attempts)
        failure = "format" if resp.error == "format" else "lmm"
        return RecognitionResult(None, summary, elapsed, resp.raw_text or "", resp.attempts,
                                 failure=failure, detail=resp.error)

    def predict(self, X):
        return [self.recognize(x).plate for x in _as_sources(X)]

    def score(self, X, y):
        preds = self.predict(X)
        return sum(p == t for p, t in zip(preds, y)) / len(preds)


def _as_sources(X):
    if isinstance(X, (str, Path, bytes, bytearray)):
        return [X]
    return list(X)


def build_recognizer(cfg: PipelineConfig, *, atlas=None, lmm_client=None, detector_params=None,
                     ocr_params=None):
    """Construct and fit the estimator for ``cfg``."""
    if cfg.backend == "lmm":
        return LmmRecognizer(client=lmm_client).fit()
    return DualPipelineRecognizer(cfg.detector, cfg.ocr, cfg.variant, atlas=atlas,
                                  detector_params=detector_params, ocr_params=ocr_params).fit()


def run_pipeline(source, cfg: PipelineConfig, annotation=None, **deps) -> RecognitionResult:
    return build_recognizer(cfg, **deps).recognize(source, annotation=annotation)
