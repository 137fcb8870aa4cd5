"""Pinhole camera math for ego-centric multi-view rigs.

Coordinate conventions (used everywhere in this package):
  - camera frame: x right, y down, z forward (optical axis); units meters
  - image frame: u right, v down, origin at the top-left corner; units pixels
  - global frame: the front camera's frame; every other camera's extrinsics
    map points from that camera's frame into it

Angles are radians internally; degrees appear only at interface boundaries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import BehindCameraError, DomainError, ValidationError

_ORTHO_TOL = 1e-9


class View(str, Enum):
    """Camera view labels, ordered clockwise from the front of the rig."""

    FRONT = "Front"
    FRONT_RIGHT = "FrontRight"
    RIGHT = "Right"
    BACK_RIGHT = "BackRight"
    BACK = "Back"
    BACK_LEFT = "BackLeft"
    LEFT = "Left"
    FRONT_LEFT = "FrontLeft"

    @property
    def ring_index(self) -> int:
        return _RING_ORDER.index(self)

    @property
    def ring_angle(self) -> float:
        """Canonical yaw of this view in radians (45 degrees per ring slot)."""
        return self.ring_index * (math.pi / 4.0)

    @property
    def phrase(self) -> str:
        """Lowercase hyphenated form for question text, e.g. 'front-right'."""
        return _PHRASES[self]


_RING_ORDER = [
    View.FRONT,
    View.FRONT_RIGHT,
    View.RIGHT,
    View.BACK_RIGHT,
    View.BACK,
    View.BACK_LEFT,
    View.LEFT,
    View.FRONT_LEFT,
]

_PHRASES = {
    View.FRONT: "front",
    View.FRONT_RIGHT: "front-right",
    View.RIGHT: "right",
    View.BACK_RIGHT: "back-right",
    View.BACK: "back",
    View.BACK_LEFT: "back-left",
    View.LEFT: "left",
    View.FRONT_LEFT: "front-left",
}

RING_ORDER = tuple(_RING_ORDER)


def parse_view(label: str) -> View:
    """Parse a view label, accepting Front / front / front_right / front-right."""
    key = label.replace("_", "").replace("-", "").replace(" ", "").lower()
    for view in View:
        if view.value.lower() == key:
            return view
    raise ValidationError(f"unknown view label: {label!r}")


@dataclass(frozen=True)
class PixelPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"pixel point must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class BBox2D:
    """Axis-aligned 2D box in pixels, (x1, y1) top-left and (x2, y2) bottom-right."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"bbox coordinates must be finite, got {vals}")
        if self.x1 >= self.x2 or self.y1 >= self.y2:
            raise ValidationError(f"degenerate bbox: {vals}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics: focal lengths, principal point, image size (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: float
    height: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.cx < self.width) or not (0 < self.cy < self.height):
            raise ValidationError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Extrinsics:
    """Rigid transform into the global frame: p_global = rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise ValidationError(f"rotation must be 3x3, got shape {rot.shape}")
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(trans)):
            raise ValidationError("extrinsics must be finite")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > _ORTHO_TOL:
            raise ValidationError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ValidationError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form [R T; 0 1]."""
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def is_identity(self, tol: float = _ORTHO_TOL) -> bool:
        return (
            np.max(np.abs(self.rotation - np.eye(3))) <= tol
            and np.max(np.abs(self.translation)) <= tol
        )


@dataclass(frozen=True)
class CameraCalibration:
    view: View
    intrinsics: Intrinsics
    extrinsics: Extrinsics

    def __post_init__(self):
        if self.view is View.FRONT and not self.extrinsics.is_identity():
            raise ValidationError(
                "the Front view defines the global frame; its extrinsics must be identity"
            )


@dataclass(frozen=True)
class Point3:
    """A 3D point in meters; the frame (camera or global) is set by context."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValidationError(f"point must be finite, got ({self.x}, {self.y}, {self.z})")

    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "Point3":
        a = np.asarray(arr, dtype=np.float64).reshape(3)
        return cls(float(a[0]), float(a[1]), float(a[2]))


def rot_y(angle_rad: float) -> np.ndarray:
    """Rotation about the y (down) axis; positive angle turns toward +x (right)."""
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def bbox_center(box: BBox2D) -> PixelPoint:
    """Center of a 2D bounding box."""
    return PixelPoint((box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0)


def backproject(u: PixelPoint, depth: float, k: Intrinsics) -> Point3:
    """Lift a pixel with known depth into the camera frame.

    p_cam = depth * K^-1 [u, v, 1]^T = (d*(u-cx)/fx, d*(v-cy)/fy, d)
    """
    if not math.isfinite(depth):
        raise ValidationError(f"depth must be finite, got {depth}")
    if depth <= 0:
        raise DomainError(f"depth must be positive, got {depth}")
    return Point3(
        depth * (u.x - k.cx) / k.fx,
        depth * (u.y - k.cy) / k.fy,
        depth,
    )


def project(p: Point3, k: Intrinsics) -> tuple[PixelPoint, float]:
    """Project a camera-frame point to (pixel, depth); exact inverse of backproject."""
    if p.z <= 0:
        raise BehindCameraError(f"cannot project point behind the camera (z={p.z})")
    return PixelPoint(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy), p.z


def to_global(p: Point3, e: Extrinsics) -> Point3:
    """Map a camera-frame point into the global frame: R p + T."""
    return Point3.from_array(e.rotation @ p.array() + e.translation)


def invert_extrinsics(e: Extrinsics) -> Extrinsics:
    """Inverse rigid transform (R^T, -R^T T)."""
    rt = e.rotation.T
    return Extrinsics(rt, -rt @ e.translation)


def distance(a: Point3, b: Point3) -> float:
    """Euclidean distance in meters."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def ground_distance(a: Point3, b: Point3) -> float:
    """Distance on the ground (x-z) plane, ignoring the vertical axis."""
    return math.hypot(a.x - b.x, a.z - b.z)


def _tan_degrees(deg: float) -> float:
    """Tangent of an angle given in degrees, exact on the 45-degree lattice.

    Going through radians makes tan(45 deg) come out one ulp below 1, which
    would leak into every estimated focal length. Folding in the exact degree
    domain first (the same idea as the C sinpi/cospi family) keeps the
    lattice values exact and changes nothing else beyond an ulp.
    """
    d = math.fmod(deg, 180.0)
    if d > 90.0:
        d -= 180.0
    elif d < -90.0:
        d += 180.0
    if d in (90.0, -90.0):
        raise DomainError(f"tangent undefined at {deg} degrees")
    if d in (45.0, -45.0):
        return math.copysign(1.0, d)
    if d == 0.0:
        return 0.0
    return math.tan(math.radians(d))


def estimated_calibration(
    views: list[View],
    width: float,
    height: float,
    horizontal_fov_deg: float,
) -> list[CameraCalibration]:
    """Synthesize a full calibration when the rig's parameters are unknown.

    All cameras sit at the origin (T = 0); the front camera gets an identity
    rotation and each other view is yawed by 45 degrees per ring slot. The
    focal length follows from the horizontal field of view:
    fx = fy = (width / 2) / tan(fov / 2), with the principal point centered.
    """
    if not views:
        raise ValidationError("at least one view is required")
    if View.FRONT not in views:
        raise ValidationError("estimated calibration requires the Front view")
    if not (10.0 <= horizontal_fov_deg <= 170.0):
        raise ValidationError(f"fov must be within [10, 170] degrees, got {horizontal_fov_deg}")
    if width <= 0 or height <= 0:
        raise ValidationError(f"image size must be positive, got {width}x{height}")

    focal = (width / 2.0) / _tan_degrees(horizontal_fov_deg / 2.0)
    intr = Intrinsics(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0,
                      width=width, height=height)
    calibs = []
    for view in sorted(set(views), key=lambda v: v.ring_index):
        rotation = np.eye(3) if view is View.FRONT else rot_y(view.ring_angle)
        calibs.append(CameraCalibration(view, intr, Extrinsics(rotation, np.zeros(3))))
    return calibs


def load_calibration(path: str | Path) -> list[CameraCalibration]:
    """Read a calibration JSON file (see save_calibration for the schema)."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read calibration file {path}: {exc}") from exc
    try:
        entries = payload["views"]
    except (TypeError, KeyError) as exc:
        raise ValidationError(f"calibration file {path} lacks a 'views' list") from exc

    calibs = []
    for entry in entries:
        try:
            intr = entry["intrinsics"]
            extr = entry["extrinsics"]
            calibs.append(
                CameraCalibration(
                    view=parse_view(entry["view"]),
                    intrinsics=Intrinsics(
                        fx=float(intr["fx"]), fy=float(intr["fy"]),
                        cx=float(intr["cx"]), cy=float(intr["cy"]),
                        width=float(intr["width"]), height=float(intr["height"]),
                    ),
                    extrinsics=Extrinsics(
                        np.array(extr["rotation"], dtype=np.float64),
                        np.array(extr["translation"], dtype=np.float64),
                    ),
                )
            )
        except (TypeError, KeyError, IndexError) as exc:
            raise ValidationError(f"malformed calibration entry in {path}: {exc}") from exc
    return calibs


def save_calibration(calibs: list[CameraCalibration], path: str | Path) -> None:
    """Write calibration JSON: row-major rotation matrices, meters and pixels only."""
    payload = {
        "views": [
            {
                "view": c.view.value,
                "intrinsics": {
                    "fx": c.intrinsics.fx, "fy": c.intrinsics.fy,
                    "cx": c.intrinsics.cx, "cy": c.intrinsics.cy,
                    "width": c.intrinsics.width, "height": c.intrinsics.height,
                },
                "extrinsics": {
                    "rotation": c.extrinsics.rotation.tolist(),
                    "translation": c.extrinsics.translation.tolist(),
                },
            }
            for c in calibs
        ]
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
