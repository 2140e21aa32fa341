"""AU-center rules, inter-ocular scale, and region placement."""

from __future__ import annotations

import numpy as np
import pytest

from aupain.core import AU_IDS, BILATERAL_AUS, DataError, FaceLandmarks
from aupain.geometry import (
    REGION_AREA,
    au_center,
    au_region,
    eye_centers,
    interocular_scale,
    scale_to_map,
)

from synth import make_face, mirror_landmarks


def face_with_eyes(left: tuple[float, float], right: tuple[float, float]) -> FaceLandmarks:
    pts = make_face().points.copy()
    pts[36:42] = left
    pts[42:48] = right
    return FaceLandmarks(points=pts, image_width=224, image_height=224)


class TestEyeCenters:
    def test_regular_hexagon_centroid(self):
        pts = make_face().points.copy()
        # Regular hexagon of radius 6 centered at (70, 100).
        angles = np.linspace(0.0, 2 * np.pi, 6, endpoint=False)
        pts[36:42] = np.stack([70 + 6 * np.cos(angles), 100 + 6 * np.sin(angles)], axis=1)
        lm = FaceLandmarks(points=pts, image_width=224, image_height=224)
        left, _ = eye_centers(lm)
        assert left == pytest.approx((70.0, 100.0), abs=1e-12)

    def test_degenerate_centroid(self):
        lm = face_with_eyes((50.0, 60.0), (150.0, 60.0))
        left, _ = eye_centers(lm)
        assert left == (50.0, 60.0)

    def test_matches_mean_oracle(self):
        rng = np.random.default_rng(11)
        lm = make_face(jitter=3.0, rng=rng)
        left, right = eye_centers(lm)
        # Independent oracle: plain arithmetic mean over the contour points.
        ox = sum(lm.points[i, 0] for i in range(36, 42)) / 6.0
        oy = sum(lm.points[i, 1] for i in range(36, 42)) / 6.0
        assert left == pytest.approx((ox, oy), abs=1e-12)
        ox = sum(lm.points[i, 0] for i in range(42, 48)) / 6.0
        oy = sum(lm.points[i, 1] for i in range(42, 48)) / 6.0
        assert right == pytest.approx((ox, oy), abs=1e-12)


class TestInterocularScale:
    def test_axis_aligned(self):
        assert interocular_scale(face_with_eyes((70, 100), (150, 100))) == pytest.approx(80.0)

    def test_3_4_5_triangle(self):
        assert interocular_scale(face_with_eyes((0, 0), (3, 4))) == pytest.approx(5.0)

    def test_coincident_centers_rejected(self):
        with pytest.raises(DataError, match="degenerate"):
            interocular_scale(face_with_eyes((80, 90), (80, 90)))


class TestAUCenters:
    def test_au1_half_scale_above_inner_brow(self):
        lm = face_with_eyes((70, 100), (150, 100))  # scale 80
        pts = lm.points.copy()
        pts[21] = (95.0, 80.0)
        lm = FaceLandmarks(points=pts, image_width=224, image_height=224)
        center = au_center(lm, 1)
        assert center.points[0] == pytest.approx((95.0, 40.0))  # 1/2 * 80 above

    def test_au7_equals_eye_centers(self, face):
        assert au_center(face, 7).points == eye_centers(face)

    def test_au43_equals_au7_everywhere(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            lm = make_face(jitter=3.0, rng=rng)
            assert au_center(lm, 43).points == au_center(lm, 7).points

    def test_point_counts_per_laterality(self, face):
        for au in AU_IDS:
            n = len(au_center(face, au).points)
            assert n == (2 if au in BILATERAL_AUS else 1)

    def test_unknown_au_rejected(self, face):
        with pytest.raises(DataError):
            au_center(face, 5)


class TestGeometryProperties:
    def test_mirror_translation_scale(self):
        rng = np.random.default_rng(101)
        for _ in range(100):
            lm = make_face(jitter=3.0, rng=rng)
            mirrored = mirror_landmarks(lm)
            dx, dy = rng.uniform(-15, 15, size=2)
            shifted = FaceLandmarks(lm.points + np.array([dx, dy]), 224, 224)
            k = rng.uniform(0.5, 2.0)
            scaled = FaceLandmarks(lm.points * k, 224, 224)
            for au in AU_IDS:
                base = au_center(lm, au).points
                mir = au_center(mirrored, au).points
                # Reflection maps left centers onto right centers.
                expect = tuple((224.0 - x, y) for (x, y) in reversed(base))
                assert np.allclose(mir, expect, atol=1e-6)
                tr = au_center(shifted, au).points
                assert np.allclose(tr, [(x + dx, y + dy) for x, y in base], atol=1e-6)
                sc = au_center(scaled, au).points
                assert np.allclose(sc, [(x * k, y * k) for x, y in base], atol=1e-6)


class TestAURegion:
    def test_interior_placement(self):
        r = au_region((112.0, 112.0), (224, 224))
        assert (r.x_left, r.x_right, r.y_top, r.y_bottom) == (107, 117, 107, 117)

    def test_corner_clamped_by_translation(self):
        # Oracle: nominal span [-3, 7) slides right by 3 to [0, 10).
        r = au_region((2, 2), (224, 224))
        assert (r.x_left, r.x_right, r.y_top, r.y_bottom) == (0, 10, 0, 10)

    def test_far_edge_clamped(self):
        r = au_region((223.7, 10.0), (224, 224))
        assert (r.x_left, r.x_right) == (214, 224)
        assert (r.y_top, r.y_bottom) == (5, 15)

    def test_small_map_rejected(self):
        with pytest.raises(DataError):
            au_region((4, 4), (8, 8))

    def test_area_and_bounds_for_arbitrary_centers(self):
        rng = np.random.default_rng(5)
        corners = [(0.0, 0.0), (223.0, 223.0), (0.0, 223.0), (223.0, 0.0)]
        centers = corners + [tuple(rng.uniform(-20, 244, size=2)) for _ in range(200)]
        for center in centers:
            r = au_region(center, (224, 224))
            assert r.area == REGION_AREA
            assert 0 <= r.x_left < r.x_right <= 224
            assert 0 <= r.y_top < r.y_bottom <= 224


class TestScaleToMap:
    def test_identity(self):
        assert scale_to_map((112, 112), (224, 224), (224, 224)) == (112, 112)

    def test_half_scale(self):
        assert scale_to_map((112, 112), (224, 224), (112, 112)) == (56, 56)

    def test_per_axis_ratio(self):
        # Oracle: x * 50/100 = 5, y * 50/200 = 5.
        assert scale_to_map((10, 20), (100, 200), (50, 50)) == (5.0, 5.0)

    def test_bad_dims(self):
        with pytest.raises(DataError):
            scale_to_map((1, 1), (0, 10), (10, 10))
