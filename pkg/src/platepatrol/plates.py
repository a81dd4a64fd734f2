"""Plate string normalization shared by every recognition backend."""

from __future__ import annotations

import re

PLATE_RE = re.compile(r"^[A-Z0-9]{6,7}$")
_STRIP = " \t\r\n\"'`“”‘’"


class PlateFormatError(ValueError):
    """Recognized text does not normalize to a 6-7 character plate."""

    reason = "format"

    def __init__(self, raw: str):
        super().__init__(f"not a 6-7 character alphanumeric plate: {raw!r}")
        self.raw = raw


def normalize_plate(raw: str) -> str:
    """Trim whitespace and quotes, uppercase, drop spaces and hyphens, validate.

    >>> normalize_plate(" hpj-149 ")
    'HPJ149'
    """
    text = raw.strip(_STRIP).upper().replace(" ", "").replace("-", "")
    if not PLATE_RE.fullmatch(text):
        raise PlateFormatError(raw)
    return text


def is_plate(text: str) -> bool:
    return isinstance(text, str) and PLATE_RE.fullmatch(text) is not None
