"""Clients for the detection and depth backends.

Two kinds of backend sit behind one interface:

* HTTP services. ``POST {base_url}/detect`` with
  ``{"image_b64": ..., "expressions": [...]}`` returns
  ``{"detections": [{"bbox": [x1, y1, x2, y2], "expression": ..., "score": ...}]}``,
  and ``POST {base_url}/depth`` with ``{"image_b64": ..., "points": [[x, y], ...]}``
  returns ``{"depths": [...]}`` in meters, one per point in request order.
  Auth is a bearer token read from the environment variable named in the
  backend config. Transient failures (timeouts, 429, 5xx) are retried with
  exponential backoff.

* Fixture directories, selected with a ``fixture://<directory>`` base URL.
  The directory holds one JSON file per image, named after the image file
  with a ``.json`` suffix (``front.png`` -> ``front.json``), containing::

      {
        "detections": [{"bbox": [...], "expression": ..., "score": ...}],
        "depth": {"default": 10.0, "points": [[x, y, depth], ...]}
      }

  Depth queries return the stored value of the nearest listed point within
  1.5 px, falling back to ``default``. Fixtures are fully deterministic and
  never touch the network, which makes them the backbone of the test suite.

Images are passed around as file paths; HTTP backends receive the bytes
base64-encoded. This module never decodes pixels itself.
"""

from __future__ import annotations

import base64
import json
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median
from typing import Sequence

import httpx

from ego3d.errors import (
    ProtocolError,
    RateLimitError,
    TransportError,
    ValidationError,
)
from ego3d.geometry import (
    BBox2D,
    CameraCalibration,
    PixelPoint,
    Point3,
    View,
    backproject,
    bbox_center,
    to_global,
)

FIXTURE_SCHEME = "fixture://"
DEFAULT_SCORE_THRESHOLD = 0.35
_FIXTURE_POINT_TOLERANCE_PX = 1.5


@dataclass(frozen=True)
class Detection:
    """One referring-expression match in one camera view."""

    view: View
    bbox: BBox2D
    expression: str
    score: float

    def __post_init__(self) -> None:
        if not self.expression:
            raise ValidationError("detection expression must be non-empty")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score must be in [0, 1], got {self.score!r}")


@dataclass(frozen=True)
class DepthSample:
    """Metric depth at one pixel of one view."""

    view: View
    point: PixelPoint
    depth: float

    def __post_init__(self) -> None:
        if not self.depth > 0:
            raise ValidationError(f"depth must be positive, got {self.depth!r}")


@dataclass(frozen=True)
class BackendConfig:
    """Connection and post-processing settings for one backend."""

    base_url: str
    timeout: float = 10.0
    max_in_flight: int = 4
    auth_token_env: str | None = None
    score_threshold: float = DEFAULT_SCORE_THRESHOLD
    best_match_only: bool = False
    depth_median5: bool = False
    retries: int = 2
    retry_backoff: float = 0.2

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValidationError("backend base_url must be non-empty")
        if not self.timeout > 0:
            raise ValidationError(f"timeout must be positive, got {self.timeout!r}")
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight must be at least 1")
        if self.retries < 0:
            raise ValidationError("retries must be non-negative")

    @property
    def fixture_dir(self) -> Path | None:
        if self.base_url.startswith(FIXTURE_SCHEME):
            return Path(self.base_url[len(FIXTURE_SCHEME):])
        return None


@dataclass(frozen=True)
class LocatedObject:
    """A referring expression resolved to a point in the global frame."""

    expression: str
    view: View
    position: Point3


@dataclass
class LocateResult:
    entries: list[LocatedObject]
    warnings: list[str] = field(default_factory=list)
    # raw (detection, depth) pairs aligned with entries, for detection-list
    # prompts and height-based scale estimation
    detections: list[tuple[Detection, float]] = field(default_factory=list)


def _encode_image(image_ref: str | Path) -> str:
    path = Path(image_ref)
    if not path.is_file():
        raise ValidationError(f"image not found: {path}")
    return base64.b64encode(path.read_bytes()).decode("ascii")


def _load_fixture(fixture_dir: Path, image_ref: str | Path) -> dict:
    name = Path(image_ref).name
    path = fixture_dir / f"{name}.json"
    if not path.is_file():
        raise ValidationError(f"no fixture for image {name!r} in {fixture_dir}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"fixture {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ProtocolError(f"fixture {path} must be a JSON object")
    return data


class _BackendClient:
    """Shared transport: fixture dispatch, auth, retries, throttling."""

    def __init__(self, cfg: BackendConfig, transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        self._throttle = threading.BoundedSemaphore(cfg.max_in_flight)
        self._http: httpx.Client | None = None
        if cfg.fixture_dir is None:
            headers = {}
            if cfg.auth_token_env:
                token = os.environ.get(cfg.auth_token_env)
                if not token:
                    raise ValidationError(
                        f"auth environment variable {cfg.auth_token_env} is not set"
                    )
                headers["Authorization"] = f"Bearer {token}"
            self._http = httpx.Client(
                base_url=cfg.base_url,
                timeout=cfg.timeout,
                headers=headers,
                transport=transport,
            )

    def close(self) -> None:
        if self._http is not None:
            self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def _post(self, path: str, payload: dict) -> dict:
        assert self._http is not None
        last_exc: Exception | None = None
        for attempt in range(self.cfg.retries + 1):
            if attempt:
                time.sleep(self.cfg.retry_backoff * 2 ** (attempt - 1))
            try:
                with self._throttle:
                    response = self._http.post(path, json=payload)
            except httpx.TransportError as exc:
                last_exc = exc
                continue
            if response.status_code == 429:
                last_exc = RateLimitError(
                    f"backend rate-limited {path}", retries=attempt
                )
                continue
            if response.status_code >= 500:
                last_exc = TransportError(
                    f"backend error {response.status_code} on {path}", retries=attempt
                )
                continue
            if response.status_code >= 400:
                raise ProtocolError(
                    f"backend rejected {path} with status {response.status_code}"
                )
            try:
                body = response.json()
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"non-JSON response from {path}") from exc
            if not isinstance(body, dict):
                raise ProtocolError(f"unexpected response shape from {path}")
            return body
        if isinstance(last_exc, TransportError):
            last_exc.retries = self.cfg.retries
            raise last_exc
        raise TransportError(
            f"backend unreachable on {path}: {last_exc}", retries=self.cfg.retries
        ) from last_exc


class RecClient(_BackendClient):
    """Referring-expression comprehension client."""

    def detect(
        self,
        image_ref: str | Path,
        expressions: Sequence[str],
        view: View = View.FRONT,
    ) -> list[Detection]:
        if not expressions:
            raise ValidationError("detect needs at least one expression")
        if any(not e for e in expressions):
            raise ValidationError("expressions must be non-empty strings")

        fixture_dir = self.cfg.fixture_dir
        if fixture_dir is not None:
            raw = _load_fixture(fixture_dir, image_ref).get("detections", [])
            wanted = set(expressions)
            raw = [d for d in raw if d.get("expression") in wanted]
        else:
            body = self._post(
                "/detect",
                {"image_b64": _encode_image(image_ref), "expressions": list(expressions)},
            )
            raw = body.get("detections")
            if not isinstance(raw, list):
                raise ProtocolError("detect response lacks a 'detections' list")

        detections = []
        for item in raw:
            try:
                detections.append(
                    Detection(
                        view=view,
                        bbox=BBox2D(*item["bbox"]),
                        expression=item["expression"],
                        score=float(item["score"]),
                    )
                )
            except (KeyError, TypeError, ValidationError) as exc:
                raise ProtocolError(f"malformed detection entry: {item!r}") from exc
        detections = [d for d in detections if d.score >= self.cfg.score_threshold]
        if self.cfg.best_match_only:
            best: dict[str, Detection] = {}
            for det in detections:
                kept = best.get(det.expression)
                if kept is None or det.score > kept.score:
                    best[det.expression] = det
            detections = [d for d in detections if best[d.expression] is d]
        return detections


class DepthClient(_BackendClient):
    """Metric depth client, queried at individual pixels."""

    def depth_at(
        self,
        image_ref: str | Path,
        points: Sequence[PixelPoint],
        view: View = View.FRONT,
        image_size: tuple[float, float] | None = None,
    ) -> list[DepthSample]:
        if image_size is not None:
            width, height = image_size
            for p in points:
                if not (0 <= p.x <= width and 0 <= p.y <= height):
                    raise ValidationError(
                        f"point ({p.x}, {p.y}) outside image bounds {image_size}"
                    )
        if not points:
            return []

        fixture_dir = self.cfg.fixture_dir
        if fixture_dir is not None:
            depths = self._fixture_depths(fixture_dir, image_ref, points)
        else:
            body = self._post(
                "/depth",
                {
                    "image_b64": _encode_image(image_ref),
                    "points": [[p.x, p.y] for p in points],
                },
            )
            depths = body.get("depths")
            if not isinstance(depths, list) or len(depths) != len(points):
                raise ProtocolError(
                    "depth response must list one depth per requested point"
                )

        samples = []
        for point, depth in zip(points, depths):
            try:
                samples.append(DepthSample(view=view, point=point, depth=float(depth)))
            except (TypeError, ValidationError) as exc:
                raise ProtocolError(f"malformed depth value {depth!r}") from exc
        return samples

    @staticmethod
    def _fixture_depths(
        fixture_dir: Path, image_ref: str | Path, points: Sequence[PixelPoint]
    ) -> list[float]:
        spec = _load_fixture(fixture_dir, image_ref).get("depth", {})
        stored = [(float(x), float(y), float(d)) for x, y, d in spec.get("points", [])]
        default = spec.get("default")
        depths = []
        for p in points:
            best = None
            for x, y, d in stored:
                dist = math.hypot(p.x - x, p.y - y)
                if dist <= _FIXTURE_POINT_TOLERANCE_PX and (best is None or dist < best[0]):
                    best = (dist, d)
            if best is not None:
                depths.append(best[1])
            elif default is not None:
                depths.append(float(default))
            else:
                raise ProtocolError(
                    f"fixture for {Path(image_ref).name!r} has no depth at ({p.x}, {p.y})"
                )
        return depths


def detect(
    image_ref: str | Path,
    expressions: Sequence[str],
    cfg: BackendConfig,
    view: View = View.FRONT,
) -> list[Detection]:
    with RecClient(cfg) as client:
        return client.detect(image_ref, expressions, view=view)


def depth_at(
    image_ref: str | Path,
    points: Sequence[PixelPoint],
    cfg: BackendConfig,
    view: View = View.FRONT,
    image_size: tuple[float, float] | None = None,
) -> list[DepthSample]:
    with DepthClient(cfg) as client:
        return client.depth_at(image_ref, points, view=view, image_size=image_size)


def _median5_depth(
    depth_client: DepthClient,
    image_ref: str | Path,
    center: PixelPoint,
    view: View,
    size: tuple[float, float],
) -> float:
    """Median depth over the 5x5 pixel patch around center, clamped to bounds."""
    width, height = size
    patch = [
        PixelPoint(min(max(center.x + dx, 0.0), width), min(max(center.y + dy, 0.0), height))
        for dy in range(-2, 3)
        for dx in range(-2, 3)
    ]
    samples = depth_client.depth_at(image_ref, patch, view=view, image_size=size)
    return median(s.depth for s in samples)


def locate_expressions(
    images: dict[View, str | Path],
    expressions: Sequence[str],
    calibrations: Sequence[CameraCalibration],
    rec: RecClient,
    depth: DepthClient,
) -> LocateResult:
    """Resolve referring expressions to global 3D points across all views.

    Per view: detect boxes, take each box center, query its metric depth,
    back-project through that view's intrinsics, and move the point into
    the global frame with the view's extrinsics. Views without calibration
    are skipped with a warning rather than failing the whole query.
    """
    calib_by_view = {c.view: c for c in calibrations}
    warnings: list[str] = []
    views = sorted(images, key=lambda v: v.ring_index)
    usable = []
    for view in views:
        if view in calib_by_view:
            usable.append(view)
        else:
            warnings.append(f"no calibration for view {view.value}; skipped")

    def process(view: View) -> list[tuple[LocatedObject, Detection, float]]:
        calib = calib_by_view[view]
        image_ref = images[view]
        detections = rec.detect(image_ref, expressions, view=view)
        if not detections:
            return []
        intr = calib.intrinsics
        size = (intr.width, intr.height)
        rows = []
        if depth.cfg.depth_median5:
            depths = [
                _median5_depth(depth, image_ref, bbox_center(d.bbox), view, size)
                for d in detections
            ]
        else:
            centers = [bbox_center(d.bbox) for d in detections]
            samples = depth.depth_at(image_ref, centers, view=view, image_size=size)
            depths = [s.depth for s in samples]
        for det, d in zip(detections, depths):
            local = backproject(bbox_center(det.bbox), d, intr)
            located = LocatedObject(
                expression=det.expression,
                view=view,
                position=to_global(local, calib.extrinsics),
            )
            rows.append((located, det, d))
        return rows

    rows: list[tuple[LocatedObject, Detection, float]] = []
    if usable:
        with ThreadPoolExecutor(max_workers=len(usable)) as pool:
            for per_view in pool.map(process, usable):
                rows.extend(per_view)
    rows.sort(key=lambda r: (r[0].view.ring_index, r[0].expression))
    return LocateResult(
        entries=[r[0] for r in rows],
        warnings=warnings,
        detections=[(r[1], r[2]) for r in rows],
    )
