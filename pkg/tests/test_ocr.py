import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platepatrol.errors import NoCharacters, StageError
from platepatrol.imaging import Image, crop
from platepatrol.mocks import _MockServer
from platepatrol.ocr import (ExternalOCR, OcrReading, Segment, TemplateOCR, match_glyph, recognize_text,
                             resample_nearest, segment_characters)
from platepatrol.plate_synth import render_plate

ALNUM = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
plates = st.text(ALNUM, min_size=6, max_size=7)


def roi_of(text, atlas, margin=3):
    img, box = render_plate(text, atlas, margin)
    return img


def glyph_image(atlas, ch, pad=4):
    ink = atlas.glyph_pixels(ch)
    canvas = np.full((ink.shape[0] + 2 * pad, ink.shape[1] + 2 * pad), 255, dtype=np.uint8)
    canvas[pad:-pad, pad:-pad][ink] = 0
    return Image(canvas)


class TestSegment:
    def test_seven_segments_in_order(self, atlas):
        segs = segment_characters(roi_of("ABC1234", atlas), atlas.cell_shape)
        assert len(segs) == 7
        assert all(a.col_end <= b.col_start for a, b in zip(segs, segs[1:]))
        assert all(s.bitmap.shape == (24, 16) for s in segs)

    def test_clean_segments_equal_atlas_glyphs(self, atlas):
        segs = segment_characters(roi_of("HPJ149", atlas), atlas.cell_shape)
        for seg, ch in zip(segs, "HPJ149"):
            assert np.array_equal(seg.bitmap, atlas.glyphs[ch])

    def test_all_white(self):
        with pytest.raises(NoCharacters):
            segment_characters(Image(np.full((30, 30), 255, dtype=np.uint8)))

    def test_wide_gaps_still_split_per_glyph(self, atlas):
        left = roi_of("ABC123", atlas).data
        gap = np.full((left.shape[0], 200), 255, dtype=np.uint8)
        both = Image(np.hstack([left, gap, left]))
        assert len(segment_characters(both, atlas.cell_shape)) == 12

    def test_narrow_specks_dropped(self, atlas):
        data = roi_of("HPJ149", atlas).data.copy()
        data[5, 1] = 0
        assert len(segment_characters(Image(data), atlas.cell_shape)) == 6

    def test_inverted_polarity(self, atlas):
        inv = Image(255 - roi_of("HPJ149", atlas).data)
        segs = segment_characters(inv, atlas.cell_shape)
        assert "".join(match_glyph(s, atlas)[0] for s in segs) == "HPJ149"

    def test_segment_order_invariant(self):
        with pytest.raises(ValueError):
            Segment(5, 5, np.zeros((24, 16), bool))

    def test_resample_picks_block_centres(self):
        mask = np.kron(np.eye(3, dtype=bool), np.ones((4, 4), bool))
        assert np.array_equal(resample_nearest(mask, (3, 3)), np.eye(3, dtype=bool))


class TestMatch:
    @pytest.mark.parametrize("ch", list(ALNUM))
    def test_self_match(self, atlas, ch):
        got, conf = match_glyph(Segment(0, 1, atlas.glyphs[ch]), atlas)
        assert (got, conf) == (ch, 1.0)

    def test_inverted_never_perfect(self, atlas):
        _, conf = match_glyph(Segment(0, 1, ~atlas.glyphs["A"]), atlas)
        assert conf < 1.0

    def test_eight_versus_b(self, atlas):
        segs = segment_characters(roi_of("8B8B8B", atlas), atlas.cell_shape)
        assert "".join(match_glyph(s, atlas)[0] for s in segs) == "8B8B8B"

    def test_ties_go_to_lowest_character(self, atlas):
        blank = np.zeros((24, 16), dtype=bool)
        scores = {c: np.mean(atlas.glyphs[c] == blank) for c in atlas.chars}
        best = max(scores.values())
        expected = min(c for c, s in scores.items() if s == best)
        assert match_glyph(Segment(0, 1, blank), atlas)[0] == expected

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_confidence_one_iff_exact(self, atlas, seed):
        bmp = np.random.default_rng(seed).random((24, 16)) < 0.5
        _, conf = match_glyph(Segment(0, 1, bmp), atlas)
        assert (conf == 1.0) == any(np.array_equal(bmp, g) for g in atlas.glyphs.values())

    def test_shape_mismatch(self, atlas):
        with pytest.raises(ValueError):
            match_glyph(Segment(0, 1, np.zeros((5, 5), bool)), atlas)


class TestRecognizeText:
    def test_hpj149(self, atlas):
        img, box = render_plate("HPJ149", atlas)
        reading = recognize_text(crop(img, box), atlas)
        assert reading.text == "HPJ149"
        assert all(c >= 0.95 for c in reading.per_char_confidence)

    def test_rgb_roi(self, atlas):
        gray = roi_of("ABC1234", atlas).data
        assert recognize_text(Image(np.dstack([gray] * 3)), atlas).text == "ABC1234"

    def test_empty_roi(self, atlas):
        with pytest.raises(NoCharacters):
            recognize_text(Image(np.full((20, 40), 255, dtype=np.uint8)), atlas)

    def test_reading_invariant(self):
        with pytest.raises(ValueError):
            OcrReading("AB", [1.0])

    @settings(max_examples=60, deadline=None)
    @given(plates)
    def test_round_trip_identity(self, atlas, text):
        assert recognize_text(roi_of(text, atlas), atlas).text == text

    @settings(max_examples=20, deadline=None)
    @given(plates)
    def test_segment_count_equals_length(self, atlas, text):
        assert len(segment_characters(roi_of(text, atlas), atlas.cell_shape)) == len(text)


class TestTemplateOCR:
    def test_default_fit_uses_atlas(self, atlas):
        ocr = TemplateOCR(atlas=atlas).fit()
        assert ocr.chars_ == sorted(ALNUM)
        assert ocr.predict([roi_of("HPJ149", atlas)]) == ["HPJ149"]

    def test_fit_from_labelled_glyph_images(self, atlas):
        X = [glyph_image(atlas, c) for c in ALNUM]
        ocr = TemplateOCR(atlas=atlas).fit(X, list(ALNUM))
        for c in ALNUM:
            assert np.array_equal(ocr.templates_[c], atlas.glyphs[c])
        assert ocr.read(roi_of("ZX90QW", atlas)).text == "ZX90QW"

    def test_unfitted(self, atlas):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            TemplateOCR(atlas=atlas).read(roi_of("HPJ149", atlas))


class _TextServer(_MockServer):
    def respond(self, index, body, headers):
        return 200, b"hpj-149\n"


class TestExternalOCR:
    def test_spawned_engine(self, atlas):
        script = "import sys; data = sys.stdin.buffer.read(); print('HPJ149' if data[:4] == b'\\x89PNG' else 'BAD')"
        reading = ExternalOCR(command=[sys.executable, "-c", script]).read(roi_of("HPJ149", atlas))
        assert reading.text == "HPJ149" and reading.per_char_confidence == [1.0] * 6

    def test_http_engine(self, atlas):
        with _TextServer() as srv:
            assert ExternalOCR(url=srv.url).read(roi_of("HPJ149", atlas)).text == "hpj-149"

    def test_failing_engine(self, atlas):
        with pytest.raises(StageError):
            ExternalOCR(command=[sys.executable, "-c", "raise SystemExit(3)"]).read(roi_of("HPJ149", atlas))

    def test_unconfigured(self, atlas):
        with pytest.raises(StageError):
            ExternalOCR().read(roi_of("HPJ149", atlas))
