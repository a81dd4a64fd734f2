"""Input coercion shared by the estimators and the CLI/service boundary."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .imaging import Image, decode_image, load_image


def check_image(obj) -> Image:
    """Coerce ``obj`` to an :class:`Image`.

    Accepts an ``Image``, a uint8 ndarray (HxW or HxWx3), encoded PNG/JPEG
    bytes, or a filesystem path.
    """
    if isinstance(obj, Image):
        return obj
    if isinstance(obj, np.ndarray):
        if obj.dtype != np.uint8:
            raise TypeError(f"ndarray images must be uint8, got {obj.dtype}")
        return Image(obj)
    if isinstance(obj, (bytes, bytearray, memoryview)):
        return decode_image(bytes(obj))
    if isinstance(obj, (str, os.PathLike)):
        return load_image(Path(obj))
    raise TypeError(f"cannot interpret {type(obj).__name__} as an image")


def check_images(X) -> list[Image]:
    if isinstance(X, (Image, bytes, bytearray, str, os.PathLike)):
        return [check_image(X)]
    if isinstance(X, np.ndarray) and X.dtype == np.uint8 and X.ndim in (2, 3) and (X.ndim == 2 or X.shape[2] == 3):
        return [check_image(X)]
    return [check_image(x) for x in X]
