"""Raster type and the plate preprocessing chain (gray, Otsu, binarize, crop)."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError
from sklearn.base import BaseEstimator, TransformerMixin

if TYPE_CHECKING:
    from .detection import DetectionBox

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageDecodeError(ValueError):
    """Raised when bytes or a file cannot be decoded as PNG/JPEG."""


@dataclass(frozen=True, eq=False)
class Image:
    """Owned 8-bit raster.

    ``data`` is a C-contiguous uint8 array of shape ``(height, width)`` for
    gray images or ``(height, width, 3)`` for RGB. The array is copied and
    made read-only on construction so an ``Image`` never aliases caller state.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            raise TypeError(f"image data must be uint8, got {arr.dtype}")
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise ValueError(f"image must be HxW or HxWx3, got shape {arr.shape}")
        if arr.shape[0] <= 0 or arr.shape[1] <= 0:
            raise ValueError("image dimensions must be positive")
        arr = np.array(arr, dtype=np.uint8, copy=True, order="C")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def shape(self):
        return self.data.shape

    def tobytes(self) -> bytes:
        return self.data.tobytes()

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"Image(width={self.width}, height={self.height}, channels={self.channels})"

    @classmethod
    def from_bytes(cls, raw: bytes, width: int, height: int, channels: int) -> "Image":
        """Build from row-major samples; ``len(raw)`` must equal ``width*height*channels``."""
        if channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if len(raw) != width * height * channels:
            raise ValueError(
                f"expected {width * height * channels} samples, got {len(raw)}"
            )
        arr = np.frombuffer(raw, dtype=np.uint8)
        shape = (height, width) if channels == 1 else (height, width, 3)
        return cls(arr.reshape(shape))


@dataclass(frozen=True)
class Histogram256:
    counts: tuple

    def __post_init__(self):
        if len(self.counts) != 256:
            raise ValueError("histogram must have 256 bins")
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("histogram counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    @classmethod
    def of(cls, img: Image) -> "Histogram256":
        if img.channels != 1:
            raise ValueError("histogram requires a 1-channel image")
        return cls(tuple(np.bincount(img.data.ravel(), minlength=256).tolist()))


def to_grayscale(img: Image) -> Image:
    """Luma conversion with round-half-up; rejects images that are already gray."""
    if img.channels != 3:
        raise ValueError("to_grayscale expects an RGB image; gray input needs no conversion")
    rgb = img.data.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    luma = r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]
    return Image(np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8))


def ensure_gray(img: Image) -> Image:
    return img if img.channels == 1 else to_grayscale(img)


def otsu_threshold(hist: Histogram256) -> int:
    """Threshold maximizing between-class variance, class 0 being ``<= t``.

    Comparison is done in exact integer arithmetic. With ``n0`` pixels and
    intensity sum ``s0`` below or at ``t`` (``N`` and ``S`` overall), the
    between-class variance is ``(N*s0 - n0*S)**2 / (N**2 * n0 * n1)``, so
    candidates compare by cross-multiplying ``(N*s0 - n0*S)**2`` against
    ``n0*n1``. Ties go to the smallest ``t``. If no split separates two
    populated classes the lowest populated intensity is returned.
    """
    counts = hist.counts
    total = sum(counts)
    if total <= 0:
        raise ValueError("otsu_threshold needs a non-empty histogram")
    grand = sum(i * c for i, c in enumerate(counts))

    best_t = -1
    best_num, best_den = 0, 1
    n0 = s0 = 0
    for t in range(256):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (total * s0 - n0 * grand) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_t < 0:
        return next(i for i, c in enumerate(counts) if c)
    return best_t


def binarize(img: Image, t: int) -> Image:
    if img.channels != 1:
        raise ValueError("binarize expects a 1-channel image")
    return Image(np.where(img.data > t, 255, 0).astype(np.uint8))


def otsu_binarize(img: Image) -> Image:
    gray = ensure_gray(img)
    return binarize(gray, otsu_threshold(Histogram256.of(gray)))


def clamp_box(box: "DetectionBox", width: int, height: int) -> tuple[int, int, int, int]:
    """Clamp ``box`` to the raster and return ``(x0, y0, x1, y1)`` (exclusive ends)."""
    x0 = max(int(box.x), 0)
    y0 = max(int(box.y), 0)
    x1 = min(int(box.x) + int(box.w), width)
    y1 = min(int(box.y) + int(box.h), height)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box} has zero area inside a {width}x{height} image")
    return x0, y0, x1, y1


def crop(img: Image, box: "DetectionBox") -> Image:
    x0, y0, x1, y1 = clamp_box(box, img.width, img.height)
    return Image(img.data[y0:y1, x0:x1])


# -- codec boundary ---------------------------------------------------------

def decode_image(raw: bytes) -> Image:
    try:
        with PILImage.open(io.BytesIO(raw)) as pil:
            pil.load()
            if pil.format not in ("PNG", "JPEG"):
                raise ImageDecodeError(f"unsupported image format {pil.format!r}")
            return from_pil(pil)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageDecodeError(f"cannot decode image: {exc}") from exc


def from_pil(pil: PILImage.Image) -> Image:
    if pil.mode in ("L", "1") or pil.mode.startswith("I;16"):
        return Image(np.asarray(pil.convert("L")))
    return Image(np.asarray(pil.convert("RGB")))


def to_pil(img: Image) -> PILImage.Image:
    return PILImage.fromarray(np.ascontiguousarray(img.data), mode="L" if img.channels == 1 else "RGB")


def encode_png(img: Image) -> bytes:
    buf = io.BytesIO()
    to_pil(img).save(buf, format="PNG")
    return buf.getvalue()


def encode_jpeg(img: Image, quality: int = 95) -> bytes:
    buf = io.BytesIO()
    to_pil(img).save(buf, format="JPEG", quality=quality)
    return buf.getvalue()


def load_image(path) -> Image:
    return decode_image(Path(path).read_bytes())


def save_image(img: Image, path) -> Path:
    path = Path(path)
    if path.suffix.lower() in (".jpg", ".jpeg"):
        path.write_bytes(encode_jpeg(img))
    else:
        path.write_bytes(encode_png(img))
    return path


# -- estimator wrappers -----------------------------------------------------

class Grayscale(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping a sequence of images to gray images."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        from .validation import check_images

        return [ensure_gray(img) for img in check_images(X)]


class OtsuBinarizer(TransformerMixin, BaseEstimator):
    """Per-image Otsu binarization; ``threshold`` pins a fixed cut instead."""

    def __init__(self, threshold=None):
        self.threshold = threshold

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        from .validation import check_images

        out = []
        for img in check_images(X):
            gray = ensure_gray(img)
            t = self.threshold if self.threshold is not None else otsu_threshold(Histogram256.of(gray))
            out.append(binarize(gray, t))
        return out
