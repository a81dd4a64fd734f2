"""Character segmentation plus glyph template matching, and an adapter for external OCR engines."""

from __future__ import annotations

import subprocess
from dataclasses import dataclass, field

import httpx
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import NoCharacters, StageError
from .imaging import Image, encode_png, otsu_binarize
from .plate_synth import GlyphAtlas, default_atlas

OCR_KINDS = ("baseline", "external")


@dataclass(frozen=True)
class Segment:
    col_start: int
    col_end: int
    bitmap: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.col_start >= self.col_end:
            raise ValueError("segment must have col_start < col_end")


@dataclass(frozen=True)
class OcrReading:
    text: str
    per_char_confidence: list

    def __post_init__(self):
        if len(self.per_char_confidence) != len(self.text):
            raise ValueError("one confidence per character required")


def resample_nearest(mask: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resample sampling each target cell at its center."""
    h, w = mask.shape
    H, W = shape
    rows = ((2 * np.arange(H) + 1) * h) // (2 * H)
    cols = ((2 * np.arange(W) + 1) * w) // (2 * W)
    return mask[np.ix_(rows, cols)]


def ink_mask(roi: Image) -> np.ndarray:
    data = roi.data if roi.channels == 1 else roi.data.min(axis=2)
    ink = data < 128
    if ink.mean() > 0.5:
        ink = ~ink
    return ink


def segment_characters(roi: Image, cell_shape=(24, 16), min_width_ratio=0.1) -> list[Segment]:
    """Split a binary ROI on ink-free columns.

    Each run of inked columns is one segment, cropped to its inked rows and
    resampled to ``cell_shape``. Runs narrower than ``min_width_ratio`` of the
    median run width are dropped as specks.
    """
    ink = ink_mask(roi)
    has_ink = ink.any(axis=0)
    edges = np.diff(np.concatenate(([0], has_ink.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    if len(starts) == 0:
        raise NoCharacters("no characters")

    widths = ends - starts
    min_width = min_width_ratio * float(np.median(widths))
    segments = []
    for c0, c1, width in zip(starts, ends, widths):
        if width < min_width:
            continue
        block = ink[:, c0:c1]
        inked_rows = np.flatnonzero(block.any(axis=1))
        block = block[inked_rows[0]:inked_rows[-1] + 1]
        segments.append(Segment(int(c0), int(c1), resample_nearest(block, cell_shape)))
    if not segments:
        raise NoCharacters("no characters")
    return segments


def _score_all(bitmap: np.ndarray, chars: list[str], stack: np.ndarray) -> np.ndarray:
    return (stack == bitmap[None]).reshape(len(chars), -1).mean(axis=1)


def match_glyph(seg: Segment, atlas: GlyphAtlas) -> tuple[str, float]:
    """Best glyph by fraction of agreeing cells; ties go to the lower character code."""
    chars = atlas.chars
    stack = np.stack([np.asarray(atlas.glyphs[c], dtype=bool) for c in chars])
    if seg.bitmap.shape != stack.shape[1:]:
        raise ValueError(f"segment bitmap {seg.bitmap.shape} does not match atlas {stack.shape[1:]}")
    scores = _score_all(seg.bitmap, chars, stack)
    best = int(np.argmax(scores))
    return chars[best], float(scores[best])


def recognize_text(roi: Image, atlas: GlyphAtlas | None = None) -> OcrReading:
    atlas = atlas or default_atlas()
    binary = otsu_binarize(roi)
    text, confs = [], []
    for seg in segment_characters(binary, atlas.cell_shape):
        ch, conf = match_glyph(seg, atlas)
        text.append(ch)
        confs.append(conf)
    return OcrReading("".join(text), confs)


class TemplateOCR(BaseEstimator):
    """Template-matching reader.

    ``fit()`` with no data takes its templates from ``atlas``; ``fit(X, y)``
    learns one template per label from glyph images, each normalized the same
    way segments are (tight ink crop, nearest-neighbor resample).
    """

    kind = "baseline"

    def __init__(self, atlas=None):
        self.atlas = atlas

    def fit(self, X=None, y=None):
        atlas = self.atlas or default_atlas()
        if X is None:
            self.templates_ = {c: np.asarray(atlas.glyphs[c], dtype=bool) for c in atlas.chars}
        else:
            from .validation import check_images

            learned = {}
            for img, label in zip(check_images(X), y):
                segs = segment_characters(otsu_binarize(img), atlas.cell_shape)
                if len(segs) != 1:
                    raise ValueError(f"training image for {label!r} holds {len(segs)} glyphs")
                learned[str(label)] = segs[0].bitmap
            self.templates_ = dict(sorted(learned.items()))
        self.chars_ = sorted(self.templates_)
        self._stack = np.stack([self.templates_[c] for c in self.chars_])
        self.cell_shape_ = self._stack.shape[1:]
        return self

    def read(self, roi: Image) -> OcrReading:
        check_is_fitted(self, "templates_")
        binary = otsu_binarize(roi)
        text, confs = [], []
        for seg in segment_characters(binary, self.cell_shape_):
            scores = _score_all(seg.bitmap, self.chars_, self._stack)
            best = int(np.argmax(scores))
            text.append(self.chars_[best])
            confs.append(float(scores[best]))
        return OcrReading("".join(text), confs)

    def predict(self, X):
        from .validation import check_images

        return [self.read(img).text for img in check_images(X)]


class ExternalOCR(BaseEstimator):
    """Adapter for real OCR engines: PNG in, a single text line out.

    Set ``command`` (argv list; PNG on stdin, text on stdout) or ``url``
    (HTTP POST of the PNG; text response body). Engines report no
    per-character confidence, so each character gets 1.0.
    """

    kind = "external"

    def __init__(self, command=None, url=None, timeout=30.0):
        self.command = command
        self.url = url
        self.timeout = timeout

    def fit(self, X=None, y=None):
        return self

    def _raw_text(self, png: bytes) -> str:
        if self.command:
            try:
                proc = subprocess.run(list(self.command), input=png, capture_output=True,
                                      timeout=self.timeout, check=False)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise StageError(f"external OCR failed to run: {exc}", stage="ocr") from exc
            if proc.returncode != 0:
                raise StageError(f"external OCR exited with {proc.returncode}", stage="ocr")
            return proc.stdout.decode("utf-8", "replace")
        if self.url:
            try:
                resp = httpx.post(self.url, content=png, headers={"Content-Type": "image/png"},
                                  timeout=self.timeout)
            except httpx.HTTPError as exc:
                raise StageError(f"external OCR unreachable: {exc}", stage="ocr") from exc
            if resp.status_code >= 400:
                raise StageError(f"external OCR returned HTTP {resp.status_code}", stage="ocr")
            return resp.text
        raise StageError("external OCR needs a command or a url", stage="ocr")

    def read(self, roi: Image) -> OcrReading:
        lines = self._raw_text(encode_png(roi)).strip().splitlines()
        text = lines[0].strip() if lines else ""
        if not text:
            raise NoCharacters("no characters")
        return OcrReading(text, [1.0] * len(text))

    def predict(self, X):
        from .validation import check_images

        return [self.read(img).text for img in check_images(X)]


def make_ocr(kind: str, **kwargs):
    if kind == "baseline":
        return TemplateOCR(**kwargs).fit()
    if kind == "external":
        return ExternalOCR(**kwargs)
    raise ValueError(f"unknown OCR kind {kind!r}; expected one of {OCR_KINDS}")
