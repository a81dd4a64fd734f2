import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import iou_by_pixels
from platepatrol.detection import (DetectionBox, ExternalDetector, HeuristicDetector, OracleDetector, detect_heuristic,
                                   detect_oracle, iou, read_sidecar, sidecar_path, write_sidecar)
from platepatrol.errors import AnnotationMissing, NoPlateFound, StageError
from platepatrol.imaging import Image, crop
from platepatrol.mocks import _MockServer
from platepatrol.plate_synth import DegradeSpec, degrade, place_on_canvas, render_plate

boxes = st.builds(DetectionBox, st.integers(0, 12), st.integers(0, 12), st.integers(1, 10), st.integers(1, 10))


class TestIoU:
    def test_identical(self):
        assert iou(DetectionBox(3, 4, 5, 6), DetectionBox(3, 4, 5, 6)) == 1.0

    def test_disjoint(self):
        assert iou(DetectionBox(0, 0, 5, 5), DetectionBox(10, 10, 5, 5)) == 0.0

    def test_half_overlap(self):
        # intersection 5*10 = 50, union 200 - 50 = 150
        assert iou(DetectionBox(0, 0, 10, 10), DetectionBox(5, 0, 10, 10)) == pytest.approx(50 / 150)

    @given(boxes, boxes)
    def test_matches_pixel_enumeration(self, a, b):
        assert iou(a, b) == pytest.approx(iou_by_pixels(a.as_tuple(), b.as_tuple()))

    @given(boxes, boxes)
    def test_symmetric_and_bounded(self, a, b):
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0


class TestBox:
    @pytest.mark.parametrize("w,h", [(0, 5), (5, 0), (-1, 3)])
    def test_positive_area(self, w, h):
        with pytest.raises(ValueError):
            DetectionBox(0, 0, w, h)

    def test_confidence_range(self):
        with pytest.raises(ValueError):
            DetectionBox(0, 0, 1, 1, 1.5)


class TestOracle:
    def test_pass_through(self):
        box = detect_oracle(None, (2, 3, 4, 5))
        assert box == DetectionBox(2, 3, 4, 5, 1.0)

    def test_sidecar_round_trip(self, tmp_path, atlas):
        img, truth = render_plate("HPJ149", atlas)
        path = tmp_path / "HPJ149.png"
        write_sidecar(path, truth)
        assert sidecar_path(path).read_text() == f"{truth.x} {truth.y} {truth.w} {truth.h}\n"
        assert read_sidecar(path) == truth
        assert OracleDetector().detect(img, path) == truth

    def test_missing_sidecar_names_path(self, tmp_path):
        path = tmp_path / "ABC1234.png"
        with pytest.raises(AnnotationMissing, match=str(tmp_path / "ABC1234.box")):
            detect_oracle(None, path)

    def test_in_memory_image_without_annotation(self, atlas):
        img, _ = render_plate("HPJ149", atlas)
        with pytest.raises(AnnotationMissing):
            OracleDetector().detect(img)


class TestHeuristic:
    def test_quality_bar_on_clean_render(self, atlas):
        img, truth = render_plate("HPJ149", atlas, margin=20)
        assert iou(detect_heuristic(img), truth) >= 0.9236

    def test_box_is_ink_extent_plus_padding(self, atlas):
        img, truth = render_plate("ABC1234", atlas, margin=20)
        box = detect_heuristic(img)
        assert box.as_tuple() == (truth.x - 2, truth.y - 2, truth.w + 4, truth.h + 4)
        assert box.confidence == 1.0

    def test_all_white_finds_nothing(self):
        with pytest.raises(NoPlateFound):
            detect_heuristic(Image(np.full((50, 80), 255, dtype=np.uint8)))

    def test_all_black_finds_nothing(self):
        with pytest.raises(NoPlateFound):
            detect_heuristic(Image(np.zeros((50, 80), dtype=np.uint8)))

    @pytest.mark.parametrize("dx,dy", [(0, 0), (7, 3), (31, 17), (64, 40)])
    def test_translation_equivariance(self, atlas, dx, dy):
        plate, _ = render_plate("KLM5521", atlas, margin=10)
        base = detect_heuristic(place_on_canvas(plate, 800, 300, 5, 5))
        moved = detect_heuristic(place_on_canvas(plate, 800, 300, 5 + dx, 5 + dy))
        assert moved.as_tuple() == base.shifted(dx, dy).as_tuple()

    def test_clamped_at_image_edge_and_croppable(self, atlas):
        img, _ = render_plate("HPJ149", atlas, margin=0)
        box = detect_heuristic(img)
        assert box.as_tuple() == (0, 0, img.width, img.height)
        assert crop(img, box).shape == img.shape

    def test_noisy_rotated_scene_still_croppable(self, atlas):
        img, truth = render_plate("HPJ149", atlas)
        box = detect_heuristic(degrade(img, DegradeSpec(8, 2, 0, 3)))
        assert iou(box, truth) > 0.8
        crop(img, box)

    def test_estimator_predict(self, atlas):
        imgs = [render_plate(p, atlas)[0] for p in ("HPJ149", "ABC1234")]
        det = HeuristicDetector(padding=0).fit(imgs)
        assert det.get_params() == {"density_cutoff": 0.05, "padding": 0}
        out = det.predict(imgs)
        assert [b.as_tuple() for b in out] == [render_plate(p, atlas)[1].as_tuple() for p in ("HPJ149", "ABC1234")]


class _BoxServer(_MockServer):
    def __init__(self, status=200, doc=None):
        super().__init__()
        self.status, self.doc = status, doc or {"x": 1, "y": 2, "w": 3, "h": 4, "confidence": 0.5}

    def respond(self, index, body, headers):
        return self.status, self.doc


class TestExternal:
    def test_posts_png_and_parses_box(self, atlas):
        img, _ = render_plate("HPJ149", atlas)
        with _BoxServer() as srv:
            box = ExternalDetector(srv.url).detect(img)
            assert srv.requests[0]["body"].startswith(b"\x89PNG")
            assert srv.requests[0]["headers"]["content-type"] == "image/png"
        assert box == DetectionBox(1, 2, 3, 4, 0.5)

    def test_malformed_response(self, atlas):
        img, _ = render_plate("HPJ149", atlas)
        with _BoxServer(doc={"x": 1}) as srv:
            with pytest.raises(StageError):
                ExternalDetector(srv.url).detect(img)

    def test_not_found_means_no_plate(self, atlas):
        img, _ = render_plate("HPJ149", atlas)
        with _BoxServer(status=404) as srv:
            with pytest.raises(NoPlateFound):
                ExternalDetector(srv.url).detect(img)
