"""Deterministic synthetic plate renderer and degrader.

Glyphs come from a built-in 5x7 dot font. Every glyph touches all four
edges of its box, has ink in every column and is a single 8-connected
component, so a clean render segments into exactly one piece per character
and the tight crop of a glyph is the glyph box itself. Dots are expanded to
a 16x24 cell grid with fixed per-column/per-row repeats.

Noise uses numpy's PCG64 bit generator (``numpy.random.Generator(PCG64(seed))``
and its ``normal`` method), which is reproducible across platforms for a
given numpy release.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .detection import DetectionBox
from .imaging import Image
from .plates import is_plate

_COL_REPEAT = (3, 3, 4, 3, 3)
_ROW_REPEAT = (3, 3, 4, 4, 4, 3, 3)

_FONT_5X7 = {
    "0": ".###. #...# #..## #.#.# ##..# #...# .###.",
    "1": "..#.. .##.. #.#.. ..#.. ..#.. ..#.. #####",
    "2": ".###. #...# ....# ...#. ..#.. .#... #####",
    "3": "##### ...#. ..#.. ...#. ....# #...# .###.",
    "4": "...#. ..##. .#.#. #..#. ##### ...#. ...#.",
    "5": "##### #.... ####. ....# ....# #...# .###.",
    "6": "..##. .#... #.... ####. #...# #...# .###.",
    "7": "##### ....# ...#. ..#.. .#... .#... .#...",
    "8": ".###. #...# #...# .###. #...# #...# .###.",
    "9": ".###. #...# #...# .#### ....# ...#. .##..",
    "A": ".###. #...# #...# ##### #...# #...# #...#",
    "B": "####. #...# #...# ####. #...# #...# ####.",
    "C": ".###. #...# #.... #.... #.... #...# .###.",
    "D": "###.. #..#. #...# #...# #...# #..#. ###..",
    "E": "##### #.... #.... ####. #.... #.... #####",
    "F": "##### #.... #.... ####. #.... #.... #....",
    "G": ".###. #...# #.... #.### #...# #...# .####",
    "H": "#...# #...# #...# ##### #...# #...# #...#",
    "I": "##### ..#.. ..#.. ..#.. ..#.. ..#.. #####",
    "J": "##### ...#. ...#. ...#. ...#. #..#. .##..",
    "K": "#...# #..#. #.#.. ##... #.#.. #..#. #...#",
    "L": "#.... #.... #.... #.... #.... #.... #####",
    "M": "#...# ##.## #.#.# #.#.# #...# #...# #...#",
    "N": "#...# #...# ##..# #.#.# #..## #...# #...#",
    "O": ".###. #...# #...# #...# #...# #...# .###.",
    "P": "####. #...# #...# ####. #.... #.... #....",
    "Q": ".###. #...# #...# #...# #.#.# #..#. .##.#",
    "R": "####. #...# #...# ####. #.#.. #..#. #...#",
    "S": ".#### #.... #.... .###. ....# ....# ####.",
    "T": "##### ..#.. ..#.. ..#.. ..#.. ..#.. ..#..",
    "U": "#...# #...# #...# #...# #...# #...# .###.",
    "V": "#...# #...# #...# #...# #...# .#.#. ..#..",
    "W": "#...# #...# #...# #.#.# #.#.# #.#.# .#.#.",
    "X": "#...# #...# .#.#. ..#.. .#.#. #...# #...#",
    "Y": "#...# #...# .#.#. ..#.. ..#.. ..#.. ..#..",
    "Z": "##### ....# ...#. ..#.. .#... #.... #####",
}


def _expand(dots: str) -> np.ndarray:
    rows = [[ch == "#" for ch in row] for row in dots.split()]
    grid = np.array(rows, dtype=bool)
    grid = np.repeat(grid, _ROW_REPEAT, axis=0)
    return np.repeat(grid, _COL_REPEAT, axis=1)


@dataclass(frozen=True)
class GlyphAtlas:
    """Character -> boolean ``(24, 16)`` cell bitmap (True = ink)."""

    glyphs: dict
    cell_size: int = 6

    def __post_init__(self):
        if self.cell_size < 1:
            raise ValueError("cell_size must be >= 1")
        if len(self.glyphs) != 36:
            raise ValueError(f"atlas needs 36 glyphs, got {len(self.glyphs)}")
        shapes = {np.asarray(b).shape for b in self.glyphs.values()}
        if len(shapes) != 1:
            raise ValueError(f"glyph bitmaps differ in shape: {shapes}")
        seen = {}
        for ch, bmp in self.glyphs.items():
            key = np.asarray(bmp, dtype=bool).tobytes()
            if key in seen:
                raise ValueError(f"glyphs {seen[key]!r} and {ch!r} are identical")
            seen[key] = ch

    @property
    def chars(self) -> list[str]:
        return sorted(self.glyphs)

    @property
    def cell_shape(self) -> tuple[int, int]:
        return np.asarray(next(iter(self.glyphs.values()))).shape

    def glyph_pixels(self, ch: str) -> np.ndarray:
        return np.kron(self.glyphs[ch], np.ones((self.cell_size, self.cell_size), dtype=bool)).astype(bool)


def default_atlas(cell_size: int = 6) -> GlyphAtlas:
    return GlyphAtlas({ch: _expand(dots) for ch, dots in _FONT_5X7.items()}, cell_size=cell_size)


def plate_size(n_chars: int, atlas: GlyphAtlas, margin: int = 0) -> tuple[int, int]:
    """Rendered ``(width, height)`` for a plate of ``n_chars`` characters."""
    rows, cols = atlas.cell_shape
    cs = atlas.cell_size
    width = n_chars * cols * cs + (n_chars - 1) * cs
    return width + 2 * margin, rows * cs + 2 * margin


def render_plate(text: str, atlas: GlyphAtlas | None = None, margin: int = 20) -> tuple[Image, DetectionBox]:
    """Black glyphs on white with a one-cell gap; returns the image and the plate box."""
    atlas = atlas or default_atlas()
    if not is_plate(text):
        raise ValueError(f"not a normalized plate: {text!r}")
    missing = [ch for ch in text if ch not in atlas.glyphs]
    if missing:
        raise ValueError(f"characters not in atlas: {missing}")
    if margin < 0:
        raise ValueError("margin must be >= 0")

    width, height = plate_size(len(text), atlas, margin)
    canvas = np.full((height, width), 255, dtype=np.uint8)
    rows, cols = atlas.cell_shape
    step = (cols + 1) * atlas.cell_size
    for i, ch in enumerate(text):
        ink = atlas.glyph_pixels(ch)
        x = margin + i * step
        region = canvas[margin:margin + ink.shape[0], x:x + ink.shape[1]]
        region[ink] = 0
    box = DetectionBox(margin, margin, width - 2 * margin, height - 2 * margin, 1.0)
    return Image(canvas), box


def place_on_canvas(img: Image, width: int, height: int, x: int, y: int, fill: int = 255) -> Image:
    """Paste ``img`` with its top-left corner at ``(x, y)`` on a blank canvas."""
    if x < 0 or y < 0 or x + img.width > width or y + img.height > height:
        raise ValueError("image does not fit on canvas at the given offset")
    shape = (height, width) if img.channels == 1 else (height, width, 3)
    canvas = np.full(shape, fill, dtype=np.uint8)
    canvas[y:y + img.height, x:x + img.width] = img.data
    return Image(canvas)


@dataclass(frozen=True)
class DegradeSpec:
    noise_sigma: float = 0.0
    rotation_deg: float = 0.0
    blur_radius: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if abs(self.rotation_deg) > 10:
            raise ValueError("rotation_deg must lie in [-10, 10]")
        if self.blur_radius < 0 or int(self.blur_radius) != self.blur_radius:
            raise ValueError("blur_radius must be a non-negative integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def is_identity(self) -> bool:
        return self.noise_sigma == 0 and self.rotation_deg == 0 and self.blur_radius == 0


def degrade(img: Image, spec: DegradeSpec) -> Image:
    """Rotate about the center (bilinear, white fill), box blur, then add seeded noise."""
    if spec.is_identity:
        return img
    data = img.data.astype(np.float64)
    planes = [data] if img.channels == 1 else [data[..., c] for c in range(3)]

    out = []
    for plane in planes:
        if spec.rotation_deg:
            plane = ndimage.rotate(plane, spec.rotation_deg, reshape=False, order=1,
                                   mode="constant", cval=255.0, prefilter=False)
        if spec.blur_radius:
            plane = ndimage.uniform_filter(plane, size=2 * int(spec.blur_radius) + 1, mode="nearest")
        out.append(plane)
    result = out[0] if img.channels == 1 else np.stack(out, axis=-1)

    if spec.noise_sigma:
        rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
        result = result + rng.normal(0.0, spec.noise_sigma, size=result.shape)
    return Image(np.clip(np.floor(result + 0.5), 0, 255).astype(np.uint8))
