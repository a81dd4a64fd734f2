"""Plate-region detection: annotation oracle, projection-profile heuristic, HTTP adapter."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import httpx
import numpy as np
from sklearn.base import BaseEstimator

from .errors import AnnotationMissing, NoPlateFound, StageError
from .imaging import Histogram256, Image, ensure_gray, otsu_threshold

DETECTOR_KINDS = ("oracle", "heuristic", "external")


@dataclass(frozen=True)
class DetectionBox:
    x: int
    y: int
    w: int
    h: int
    confidence: float = 1.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive area, got w={self.w} h={self.h}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    @property
    def area(self) -> int:
        return self.w * self.h

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)

    def shifted(self, dx: int, dy: int) -> "DetectionBox":
        return DetectionBox(self.x + dx, self.y + dy, self.w, self.h, self.confidence)


def iou(a: DetectionBox, b: DetectionBox) -> float:
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    return inter / (a.area + b.area - inter)


# -- sidecar annotations ------------------------------------------------------

def sidecar_path(image_path) -> Path:
    return Path(image_path).with_suffix(".box")


def write_sidecar(image_path, box: DetectionBox) -> Path:
    path = sidecar_path(image_path)
    path.write_text(f"{box.x} {box.y} {box.w} {box.h}\n")
    return path


def read_sidecar(image_path) -> DetectionBox:
    path = sidecar_path(image_path)
    if not path.exists():
        raise AnnotationMissing(f"no annotation for image: expected {path}")
    fields = path.read_text().split()
    if len(fields) != 4:
        raise AnnotationMissing(f"malformed annotation in {path}: expected 'x y w h'")
    x, y, w, h = (int(v) for v in fields)
    return DetectionBox(x, y, w, h, 1.0)


def detect_oracle(img: Image, annotation) -> DetectionBox:
    """Return the annotated box with confidence 1.0.

    ``annotation`` is a DetectionBox, an ``(x, y, w, h)`` tuple, or the image
    path whose ``.box`` sidecar holds the annotation.
    """
    if annotation is None:
        raise AnnotationMissing("oracle detector needs an annotation")
    if isinstance(annotation, DetectionBox):
        return DetectionBox(*annotation.as_tuple(), 1.0)
    if isinstance(annotation, (str, Path)):
        return read_sidecar(annotation)
    x, y, w, h = annotation
    return DetectionBox(int(x), int(y), int(w), int(h), 1.0)


# -- projection-profile heuristic -------------------------------------------

def dark_mask(img: Image) -> np.ndarray:
    """Otsu foreground (at or below threshold), inverted when it is the majority."""
    gray = ensure_gray(img)
    t = otsu_threshold(Histogram256.of(gray))
    dark = gray.data <= t
    if dark.mean() > 0.5:
        dark = ~dark
    return dark


def detect_heuristic(img: Image, density_cutoff: float = 0.05, padding: int = 2) -> DetectionBox:
    dark = dark_mask(img)
    total = int(dark.sum())
    if total == 0:
        raise NoPlateFound("no plate found")

    cols = dark.sum(axis=0)
    rows = dark.sum(axis=1)
    keep_c = np.flatnonzero(cols > density_cutoff * cols.max())
    keep_r = np.flatnonzero(rows > density_cutoff * rows.max())

    x0 = max(int(keep_c[0]) - padding, 0)
    x1 = min(int(keep_c[-1]) + 1 + padding, img.width)
    y0 = max(int(keep_r[0]) - padding, 0)
    y1 = min(int(keep_r[-1]) + 1 + padding, img.height)
    covered = int(dark[y0:y1, x0:x1].sum())
    return DetectionBox(x0, y0, x1 - x0, y1 - y0, covered / total)


# -- estimators ---------------------------------------------------------------

class HeuristicDetector(BaseEstimator):
    """Projection-profile plate finder; ``predict`` maps images to boxes."""

    kind = "heuristic"

    def __init__(self, density_cutoff=0.05, padding=2):
        self.density_cutoff = density_cutoff
        self.padding = padding

    def fit(self, X=None, y=None):
        return self

    def detect(self, img: Image, source=None) -> DetectionBox:
        return detect_heuristic(img, self.density_cutoff, self.padding)

    def predict(self, X):
        from .validation import check_images

        return [self.detect(img) for img in check_images(X)]


class OracleDetector(BaseEstimator):
    """Annotation-backed detector; looks up ``<image>.box`` next to the source file."""

    kind = "oracle"

    def __init__(self, annotations=None):
        self.annotations = annotations

    def fit(self, X=None, y=None):
        return self

    def detect(self, img: Image, source=None) -> DetectionBox:
        if self.annotations is not None and source is not None and str(source) in self.annotations:
            return detect_oracle(img, self.annotations[str(source)])
        if isinstance(source, (str, Path)):
            return detect_oracle(img, source)
        if isinstance(source, (DetectionBox, tuple)):
            return detect_oracle(img, source)
        raise AnnotationMissing("oracle detector needs an image path with a .box sidecar")


class ExternalDetector(BaseEstimator):
    """Forwards PNG bytes to an HTTP detector answering ``{x, y, w, h, confidence}``."""

    kind = "external"

    def __init__(self, url=None, timeout=10.0):
        self.url = url
        self.timeout = timeout

    def fit(self, X=None, y=None):
        return self

    def detect(self, img: Image, source=None) -> DetectionBox:
        from .imaging import encode_png

        if not self.url:
            raise StageError("external detector URL is not configured", stage="detect")
        try:
            resp = httpx.post(self.url, content=encode_png(img),
                              headers={"Content-Type": "image/png"}, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise StageError(f"external detector unreachable: {exc}", stage="detect") from exc
        if resp.status_code == 404:
            raise NoPlateFound("external detector found no plate")
        if resp.status_code >= 400:
            raise StageError(f"external detector returned HTTP {resp.status_code}", stage="detect")
        doc = resp.json()
        try:
            return DetectionBox(int(doc["x"]), int(doc["y"]), int(doc["w"]), int(doc["h"]),
                                float(doc.get("confidence", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise StageError(f"malformed detector response: {exc}", stage="detect") from exc


def make_detector(kind: str, **kwargs):
    if kind == "oracle":
        return OracleDetector(**kwargs)
    if kind == "heuristic":
        return HeuristicDetector(**kwargs)
    if kind == "external":
        return ExternalDetector(**kwargs)
    raise ValueError(f"unknown detector kind {kind!r}; expected one of {DETECTOR_KINDS}")
