"""Scale-recovery tests. Expected factors come from hand mean-and-ratio oracles."""

from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ego3d.errors import DomainError, NoReferenceObjectsError, ValidationError
from ego3d.geometry import BBox2D, Point3, distance
from ego3d.scaling import (
    HeightObservation,
    ReferenceClass,
    ScaleEstimate,
    apply_scale,
    estimate_scale,
    load_reference_classes,
    observed_height,
)

PERSON = ReferenceClass("person", 1.7)
SEDAN = ReferenceClass("sedan", 1.5)
BIKE = ReferenceClass("bike", 1.1)
CLASSES = [PERSON, SEDAN, BIKE]


def person_obs(height_m: float, depth: float = 10.0, fy: float = 1000.0) -> HeightObservation:
    """Build an observation whose implied metric height is exactly height_m."""
    h_px = height_m * fy / depth
    return HeightObservation("person", BBox2D(0, 0, 10, h_px), depth, fy)


class TestObservedHeight:
    def test_similar_triangles(self):
        # oracle: 170 px * 10 m / 1000 px = 1.70 m
        obs = HeightObservation("person", BBox2D(0, 0, 10, 170), 10.0, 1000.0)
        assert observed_height(obs) == pytest.approx(1.70)

    def test_depth_compensates_pixel_size(self):
        # oracle: 340 px * 5 m / 1000 px = 1.70 m
        obs = HeightObservation("person", BBox2D(0, 0, 10, 340), 5.0, 1000.0)
        assert observed_height(obs) == pytest.approx(1.70)

    def test_degenerate_box_accepted(self):
        obs = HeightObservation("person", BBox2D(0, 0, 10, 0.0001), 10.0, 1000.0)
        assert observed_height(obs) < 1e-5

    def test_bad_inputs_rejected(self):
        with pytest.raises(ValidationError):
            HeightObservation("person", BBox2D(0, 0, 10, 170), 0.0, 1000.0)
        with pytest.raises(ValidationError):
            HeightObservation("person", BBox2D(0, 0, 10, 170), 10.0, -1.0)


class TestEstimateScale:
    def test_already_metric(self):
        est = estimate_scale([person_obs(1.7)] * 3, CLASSES)
        assert est.factor == pytest.approx(1.0)
        assert est.class_used == "person"
        assert est.n_observations == 3

    def test_overestimated_heights_shrink_scene(self):
        # oracle: 1.7 / mean(2.0, 2.0) = 0.85
        est = estimate_scale([person_obs(2.0), person_obs(2.0)], CLASSES)
        assert est.factor == pytest.approx(0.85)

    def test_class_selected_by_count(self):
        # oracle: persons win 2 to 1; 1.7 / mean(1.6, 1.8) = 1.0
        sedan = HeightObservation("sedan", BBox2D(0, 0, 10, 150), 10.0, 1000.0)
        est = estimate_scale([person_obs(1.6), person_obs(1.8), sedan], CLASSES)
        assert est.class_used == "person"
        assert est.factor == pytest.approx(1.0)
        assert est.n_observations == 2

    def test_tie_breaks_to_taller_class(self):
        sedan = HeightObservation("sedan", BBox2D(0, 0, 10, 150), 10.0, 1000.0)
        est = estimate_scale([person_obs(1.7), sedan], CLASSES)
        assert est.class_used == "person"

    def test_outliers_discarded(self):
        # 20 m implied height falls outside [0.51, 5.1] and is ignored
        est = estimate_scale([person_obs(1.7), person_obs(1.7), person_obs(20.0)], CLASSES)
        assert est.factor == pytest.approx(1.0)
        assert est.n_observations == 2

    def test_unknown_classes_raise(self):
        obs = HeightObservation("lamppost", BBox2D(0, 0, 10, 170), 10.0, 1000.0)
        with pytest.raises(NoReferenceObjectsError):
            estimate_scale([obs], CLASSES)
        with pytest.raises(NoReferenceObjectsError):
            estimate_scale([], CLASSES)

    def test_all_outliers_raise(self):
        with pytest.raises(NoReferenceObjectsError):
            estimate_scale([person_obs(40.0)], CLASSES)

    def test_class_match_is_case_insensitive(self):
        obs = HeightObservation("Person", BBox2D(0, 0, 10, 170), 10.0, 1000.0)
        assert estimate_scale([obs], CLASSES).class_used == "person"

    @given(lam=st.floats(min_value=0.5, max_value=2.0))
    def test_recovers_inverse_of_depth_scale(self, lam):
        # If depths (hence implied heights) are inflated by lambda, the
        # correction factor must be 1/lambda.
        observations = [person_obs(1.7 * lam, depth=d) for d in (5.0, 8.0, 12.0)]
        est = estimate_scale(observations, CLASSES)
        assert est.factor == pytest.approx(1.0 / lam, rel=1e-9)


class TestApplyScale:
    def test_identity_and_componentwise(self):
        pts = [Point3(4, -2, 10)]
        assert apply_scale(pts, 1.0) == pts
        (scaled,) = apply_scale(pts, 0.5)
        assert (scaled.x, scaled.y, scaled.z) == (2.0, -1.0, 5.0)

    def test_nonpositive_scale_rejected(self):
        for bad in (0.0, -1.0, float("nan"), float("inf")):
            with pytest.raises(DomainError):
                apply_scale([Point3(1, 1, 1)], bad)

    @given(
        coords=st.lists(st.floats(min_value=-50, max_value=50), min_size=6, max_size=6),
        s=st.floats(min_value=0.01, max_value=100),
    )
    def test_distances_scale_linearly(self, coords, s):
        a, b = Point3(*coords[:3]), Point3(*coords[3:])
        sa, sb = apply_scale([a, b], s)
        assert distance(sa, sb) == pytest.approx(s * distance(a, b), rel=1e-12, abs=1e-12)

    def test_nearest_neighbor_invariant(self):
        ego = Point3(0, 0, 0)
        pts = [Point3(1, 0, 5), Point3(2, 0, 9), Point3(-3, 0, 2)]
        before = min(range(3), key=lambda i: distance(ego, pts[i]))
        scaled = apply_scale(pts, 7.3)
        after = min(range(3), key=lambda i: distance(ego, scaled[i]))
        assert before == after


class TestReferenceClassIO:
    def test_packaged_defaults(self):
        classes = load_reference_classes()
        by_name = {c.name: c.canonical_height for c in classes}
        assert by_name["person"] == 1.7
        assert set(by_name) >= {"person", "sedan", "bike"}

    def test_custom_file(self, tmp_path):
        path = tmp_path / "classes.json"
        path.write_text(
            json.dumps({"classes": [{"name": "bus", "canonical_height_m": 3.2}]}),
            encoding="utf-8",
        )
        (bus,) = load_reference_classes(path)
        assert bus == ReferenceClass("bus", 3.2)

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "classes.json"
        path.write_text("[]", encoding="utf-8")
        with pytest.raises(ValidationError):
            load_reference_classes(path)
        path.write_text('{"classes": []}', encoding="utf-8")
        with pytest.raises(ValidationError):
            load_reference_classes(path)

    def test_estimate_fields_validated(self):
        with pytest.raises(ValidationError):
            ScaleEstimate(factor=-1.0, h_est=1.7, class_used="person", n_observations=1)
        with pytest.raises(ValidationError):
            ScaleEstimate(factor=1.0, h_est=1.7, class_used="person", n_observations=0)
