"""Backend client tests: fixture directory behavior, HTTP error handling,
and the full expression-to-global-point composition."""

from __future__ import annotations

import json
import math
from pathlib import Path

import httpx
import numpy as np
import pytest

from ego3d.errors import ProtocolError, RateLimitError, TransportError, ValidationError
from ego3d.geometry import (
    PixelPoint,
    Point3,
    View,
    estimated_calibration,
    invert_extrinsics,
    project,
    rot_y,
    to_global,
)
from ego3d.perception import (
    BackendConfig,
    DepthClient,
    RecClient,
    detect,
    depth_at,
    locate_expressions,
)


def write_fixture(directory: Path, image_name: str, payload: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{image_name}.json").write_text(json.dumps(payload), encoding="utf-8")


@pytest.fixture
def fixture_dir(tmp_path):
    d = tmp_path / "backend"
    write_fixture(
        d,
        "front.png",
        {
            "detections": [
                {"bbox": [100, 50, 200, 150], "expression": "red sedan", "score": 0.9},
                {"bbox": [400, 80, 480, 300], "expression": "pedestrian", "score": 0.6},
                {"bbox": [5, 5, 20, 20], "expression": "red sedan", "score": 0.2},
            ],
            "depth": {"default": 10.0, "points": [[150.0, 100.0, 12.5]]},
        },
    )
    return d


def fixture_cfg(d: Path, **overrides) -> BackendConfig:
    return BackendConfig(base_url=f"fixture://{d}", **overrides)


class TestFixtureRec:
    def test_echoes_stored_detections(self, fixture_dir):
        dets = detect("front.png", ["red sedan"], fixture_cfg(fixture_dir))
        assert len(dets) == 1  # the 0.2-score duplicate is under threshold
        assert dets[0].expression == "red sedan"
        assert (dets[0].bbox.x1, dets[0].bbox.y2) == (100, 150)

    def test_absent_expression_yields_nothing(self, fixture_dir):
        dets = detect("front.png", ["red sedan", "unicycle"], fixture_cfg(fixture_dir))
        assert [d.expression for d in dets] == ["red sedan"]

    def test_score_threshold_configurable(self, fixture_dir):
        dets = detect(
            "front.png", ["red sedan"], fixture_cfg(fixture_dir, score_threshold=0.0)
        )
        assert len(dets) == 2

    def test_best_match_only(self, fixture_dir):
        cfg = fixture_cfg(fixture_dir, score_threshold=0.0, best_match_only=True)
        dets = detect("front.png", ["red sedan"], cfg)
        assert len(dets) == 1
        assert dets[0].score == 0.9

    def test_empty_expressions_rejected_before_io(self, tmp_path):
        with pytest.raises(ValidationError):
            detect("front.png", [], fixture_cfg(tmp_path / "missing"))

    def test_missing_fixture_rejected(self, fixture_dir):
        with pytest.raises(ValidationError):
            detect("side.png", ["red sedan"], fixture_cfg(fixture_dir))

    def test_corrupt_fixture_is_protocol_error(self, tmp_path):
        d = tmp_path / "backend"
        d.mkdir()
        (d / "front.png.json").write_text("{oops", encoding="utf-8")
        with pytest.raises(ProtocolError):
            detect("front.png", ["red sedan"], fixture_cfg(d))


class TestFixtureDepth:
    def test_stored_point_wins_over_default(self, fixture_dir):
        samples = depth_at(
            "front.png",
            [PixelPoint(150, 100), PixelPoint(600, 200)],
            fixture_cfg(fixture_dir),
        )
        assert [s.depth for s in samples] == [12.5, 10.0]

    def test_near_match_within_tolerance(self, fixture_dir):
        (sample,) = depth_at("front.png", [PixelPoint(150.6, 100.4)], fixture_cfg(fixture_dir))
        assert sample.depth == 12.5

    def test_order_matches_request(self, fixture_dir):
        pts = [PixelPoint(600, 200), PixelPoint(150, 100), PixelPoint(0, 0)]
        samples = depth_at("front.png", pts, fixture_cfg(fixture_dir))
        assert [s.point for s in samples] == pts
        assert [s.depth for s in samples] == [10.0, 12.5, 10.0]

    def test_out_of_bounds_point_rejected(self, fixture_dir):
        with pytest.raises(ValidationError):
            depth_at(
                "front.png",
                [PixelPoint(2000, 100)],
                fixture_cfg(fixture_dir),
                image_size=(1280, 720),
            )

    def test_no_default_no_match_is_protocol_error(self, tmp_path):
        d = tmp_path / "backend"
        write_fixture(d, "front.png", {"depth": {"points": [[10.0, 10.0, 5.0]]}})
        with pytest.raises(ProtocolError):
            depth_at("front.png", [PixelPoint(500, 500)], fixture_cfg(d))


def http_cfg(**overrides) -> BackendConfig:
    defaults = dict(base_url="http://backend.test", retry_backoff=0.0)
    defaults.update(overrides)
    return BackendConfig(**defaults)


def make_image(tmp_path) -> Path:
    img = tmp_path / "front.png"
    img.write_bytes(b"\x89PNG fake bytes")
    return img


class TestHttpBackend:
    def test_detect_round_trip(self, tmp_path):
        img = make_image(tmp_path)
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["url"] = str(request.url)
            seen["body"] = json.loads(request.content)
            return httpx.Response(
                200,
                json={
                    "detections": [
                        {"bbox": [1, 2, 3, 4], "expression": "red sedan", "score": 0.8}
                    ]
                },
            )

        with RecClient(http_cfg(), transport=httpx.MockTransport(handler)) as client:
            dets = client.detect(img, ["red sedan"], view=View.BACK)
        assert seen["url"] == "http://backend.test/detect"
        assert seen["body"]["expressions"] == ["red sedan"]
        assert "image_b64" in seen["body"]
        assert dets[0].view is View.BACK

    def test_depth_round_trip(self, tmp_path):
        img = make_image(tmp_path)

        def handler(request: httpx.Request) -> httpx.Response:
            body = json.loads(request.content)
            assert body["points"] == [[10.0, 20.0]]
            return httpx.Response(200, json={"depths": [7.25]})

        with DepthClient(http_cfg(), transport=httpx.MockTransport(handler)) as client:
            (sample,) = client.depth_at(img, [PixelPoint(10, 20)])
        assert sample.depth == 7.25

    def test_bearer_token_from_env(self, tmp_path, monkeypatch):
        img = make_image(tmp_path)
        monkeypatch.setenv("EGO3D_REC_TOKEN", "sekrit")
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json={"detections": []})

        cfg = http_cfg(auth_token_env="EGO3D_REC_TOKEN")
        with RecClient(cfg, transport=httpx.MockTransport(handler)) as client:
            client.detect(img, ["x"])
        assert seen["auth"] == "Bearer sekrit"

    def test_missing_token_env_rejected(self, monkeypatch):
        monkeypatch.delenv("EGO3D_REC_TOKEN", raising=False)
        with pytest.raises(ValidationError):
            RecClient(http_cfg(auth_token_env="EGO3D_REC_TOKEN"))

    def test_server_errors_retried_then_succeed(self, tmp_path):
        img = make_image(tmp_path)
        calls = []

        def handler(request: httpx.Request) -> httpx.Response:
            calls.append(1)
            if len(calls) < 3:
                return httpx.Response(503)
            return httpx.Response(200, json={"depths": [4.0]})

        with DepthClient(http_cfg(), transport=httpx.MockTransport(handler)) as client:
            (sample,) = client.depth_at(img, [PixelPoint(1, 1)])
        assert sample.depth == 4.0
        assert len(calls) == 3

    def test_retries_exhausted_reports_count(self, tmp_path):
        img = make_image(tmp_path)

        def handler(request: httpx.Request) -> httpx.Response:
            raise httpx.ConnectError("boom", request=request)

        with DepthClient(http_cfg(retries=2), transport=httpx.MockTransport(handler)) as c:
            with pytest.raises(TransportError) as excinfo:
                c.depth_at(img, [PixelPoint(1, 1)])
        assert excinfo.value.retries == 2

    def test_rate_limit_surfaces_as_rate_limit_error(self, tmp_path):
        img = make_image(tmp_path)

        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(429)

        with RecClient(http_cfg(), transport=httpx.MockTransport(handler)) as client:
            with pytest.raises(RateLimitError):
                client.detect(img, ["x"])

    def test_client_error_is_protocol_error_without_retry(self, tmp_path):
        img = make_image(tmp_path)
        calls = []

        def handler(request: httpx.Request) -> httpx.Response:
            calls.append(1)
            return httpx.Response(400)

        with RecClient(http_cfg(), transport=httpx.MockTransport(handler)) as client:
            with pytest.raises(ProtocolError):
                client.detect(img, ["x"])
        assert len(calls) == 1

    def test_malformed_payload_is_protocol_error(self, tmp_path):
        img = make_image(tmp_path)

        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, json={"detections": [{"expression": "x"}]})

        with RecClient(http_cfg(), transport=httpx.MockTransport(handler)) as client:
            with pytest.raises(ProtocolError):
                client.detect(img, ["x"])

    def test_missing_image_rejected_before_network(self, tmp_path):
        def handler(request: httpx.Request) -> httpx.Response:  # pragma: no cover
            raise AssertionError("should not be called")

        with RecClient(http_cfg(), transport=httpx.MockTransport(handler)) as client:
            with pytest.raises(ValidationError):
                client.detect(tmp_path / "nope.png", ["x"])


def centered_box(p: PixelPoint) -> list[float]:
    return [p.x - 5, p.y - 5, p.x + 5, p.y + 5]


class TestLocateExpressions:
    WIDTH, HEIGHT, FOV = 1600.0, 900.0, 90.0

    def locate(self, fixture_root, images, expressions, views):
        calibs = estimated_calibration(views, self.WIDTH, self.HEIGHT, self.FOV)
        cfg = fixture_cfg(fixture_root)
        with RecClient(cfg) as rec, DepthClient(cfg) as depth:
            return locate_expressions(images, expressions, calibs, rec, depth)

    def test_front_principal_point(self, tmp_path):
        write_fixture(
            tmp_path,
            "front.png",
            {
                "detections": [
                    {"bbox": centered_box(PixelPoint(800, 450)), "expression": "cone", "score": 1.0}
                ],
                "depth": {"default": 12.0},
            },
        )
        result = self.locate(tmp_path, {View.FRONT: "front.png"}, ["cone"], [View.FRONT])
        (entry,) = result.entries
        np.testing.assert_allclose(entry.position.array(), [0.0, 0.0, 12.0], atol=1e-12)
        assert result.warnings == []

    def test_front_right_rotation_applied(self, tmp_path):
        # oracle: rot_y(45 deg) @ (0, 0, 12) = (12/sqrt(2), 0, 12/sqrt(2))
        write_fixture(
            tmp_path,
            "fr.png",
            {
                "detections": [
                    {"bbox": centered_box(PixelPoint(800, 450)), "expression": "cone", "score": 1.0}
                ],
                "depth": {"default": 12.0},
            },
        )
        result = self.locate(
            tmp_path,
            {View.FRONT_RIGHT: "fr.png"},
            ["cone"],
            [View.FRONT, View.FRONT_RIGHT],
        )
        (entry,) = result.entries
        expected = rot_y(math.pi / 4) @ np.array([0.0, 0.0, 12.0])
        np.testing.assert_allclose(entry.position.array(), expected, atol=1e-9)
        np.testing.assert_allclose(
            entry.position.array(), [8.4853, 0.0, 8.4853], atol=1e-3
        )

    def test_no_detections_is_empty_not_error(self, tmp_path):
        write_fixture(tmp_path, "front.png", {"detections": [], "depth": {"default": 5.0}})
        result = self.locate(tmp_path, {View.FRONT: "front.png"}, ["ghost"], [View.FRONT])
        assert result.entries == []

    def test_uncalibrated_view_skipped_with_warning(self, tmp_path):
        write_fixture(
            tmp_path,
            "back.png",
            {
                "detections": [
                    {"bbox": centered_box(PixelPoint(800, 450)), "expression": "cone", "score": 1.0}
                ],
                "depth": {"default": 5.0},
            },
        )
        result = self.locate(tmp_path, {View.BACK: "back.png"}, ["cone"], [View.FRONT])
        assert result.entries == []
        assert any("Back" in w for w in result.warnings)

    def test_entries_sorted_by_ring_then_expression(self, tmp_path):
        payload = {
            "detections": [
                {"bbox": centered_box(PixelPoint(700, 400)), "expression": "zebra", "score": 1.0},
                {"bbox": centered_box(PixelPoint(900, 500)), "expression": "ambulance", "score": 1.0},
            ],
            "depth": {"default": 8.0},
        }
        write_fixture(tmp_path, "back.png", payload)
        write_fixture(tmp_path, "front.png", payload)
        result = self.locate(
            tmp_path,
            {View.BACK: "back.png", View.FRONT: "front.png"},
            ["zebra", "ambulance"],
            [View.FRONT, View.BACK],
        )
        keys = [(e.view.value, e.expression) for e in result.entries]
        assert keys == [
            ("Front", "ambulance"),
            ("Front", "zebra"),
            ("Back", "ambulance"),
            ("Back", "zebra"),
        ]

    def test_recovers_forward_projected_scene(self, tmp_path):
        """Fixtures generated by projecting known global points must be
        recovered exactly (to float tolerance) by the full pipeline."""
        views = [View.FRONT, View.RIGHT, View.BACK_LEFT]
        calibs = estimated_calibration(views, self.WIDTH, self.HEIGHT, self.FOV)
        truth = {
            View.FRONT: ("white van", Point3(2.0, -0.5, 14.0)),
            View.RIGHT: ("hydrant", Point3(9.0, 0.4, -1.0)),
            View.BACK_LEFT: ("oak tree", Point3(-12.0, -2.0, -11.0)),
        }
        images = {}
        for calib in calibs:
            expression, p_global = truth[calib.view]
            cam = to_global(p_global, invert_extrinsics(calib.extrinsics))
            pixel, depth = project(cam, calib.intrinsics)
            name = f"{calib.view.value}.png"
            write_fixture(
                tmp_path,
                name,
                {
                    "detections": [
                        {"bbox": centered_box(pixel), "expression": expression, "score": 1.0}
                    ],
                    "depth": {"points": [[pixel.x, pixel.y, depth]]},
                },
            )
            images[calib.view] = name

        cfg = fixture_cfg(tmp_path)
        with RecClient(cfg) as rec, DepthClient(cfg) as depth_client:
            result = locate_expressions(
                images, [t[0] for t in truth.values()], calibs, rec, depth_client
            )
        assert len(result.entries) == 3
        for entry in result.entries:
            expected = truth[entry.view][1]
            np.testing.assert_allclose(
                entry.position.array(), expected.array(), atol=1e-6
            )

    def test_median_5x5_patch_depth(self, tmp_path):
        write_fixture(
            tmp_path,
            "front.png",
            {
                "detections": [
                    {"bbox": centered_box(PixelPoint(800, 450)), "expression": "cone", "score": 1.0}
                ],
                # center pixel is an outlier; the patch median ignores it
                "depth": {"default": 10.0, "points": [[800.0, 450.0, 90.0]]},
            },
        )
        calibs = estimated_calibration([View.FRONT], self.WIDTH, self.HEIGHT, self.FOV)
        cfg = fixture_cfg(tmp_path)
        median_cfg = fixture_cfg(tmp_path, depth_median5=True)
        with RecClient(cfg) as rec, DepthClient(median_cfg) as depth_client:
            result = locate_expressions(
                {View.FRONT: "front.png"}, ["cone"], calibs, rec, depth_client
            )
        assert result.entries[0].position.z == pytest.approx(10.0)
