"""License-plate patrol: detection, OCR and multimodal recognition, legality checks, notifications."""

from .detection import DetectionBox, HeuristicDetector, OracleDetector, detect_heuristic, iou
from .imaging import Grayscale, Histogram256, Image, OtsuBinarizer, binarize, crop, otsu_threshold, to_grayscale
from .lmm import PROMPT, LmmClient, build_prompt, parse_response
from .ocr import TemplateOCR, recognize_text
from .plate_synth import DegradeSpec, GlyphAtlas, default_atlas, degrade, render_plate
from .plates import PlateFormatError, normalize_plate
from .recognizer import (DualPipelineRecognizer, LmmRecognizer, PipelineConfig, RecognitionResult,
                         build_recognizer, run_pipeline)

__all__ = [
    "DegradeSpec", "DetectionBox", "DualPipelineRecognizer", "GlyphAtlas", "Grayscale", "HeuristicDetector",
    "Histogram256", "Image", "LmmClient", "LmmRecognizer", "OracleDetector", "OtsuBinarizer", "PROMPT",
    "PipelineConfig", "PlateFormatError", "RecognitionResult", "TemplateOCR", "binarize", "build_prompt",
    "build_recognizer", "crop", "default_atlas", "degrade", "detect_heuristic", "iou", "normalize_plate",
    "otsu_threshold", "parse_response", "recognize_text", "render_plate", "run_pipeline", "to_grayscale",
]
