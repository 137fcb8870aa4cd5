"""Metric scale recovery from known object heights.

Monocular depth backends are often only correct up to a global scale.
When a scene contains objects whose real-world height is well known
(people are about 1.7 m tall), the ratio between that canonical height
and the height we actually measure from bounding boxes and depth gives
a correction factor for every 3D point in the scene.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from statistics import fmean

from ego3d.errors import DomainError, NoReferenceObjectsError, ValidationError
from ego3d.geometry import BBox2D, Point3

# Observed heights outside this band (relative to the canonical height)
# are treated as mismatched detections and dropped.
OUTLIER_BAND = (0.3, 3.0)


@dataclass(frozen=True)
class ReferenceClass:
    """An object class with a canonical real-world height in meters."""

    name: str
    canonical_height: float

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("reference class needs a non-empty name")
        if not self.canonical_height > 0:
            raise ValidationError(
                f"canonical height must be positive, got {self.canonical_height!r}"
            )


@dataclass(frozen=True)
class HeightObservation:
    """One detected instance of a reference class: its box, depth, and focal length."""

    class_name: str
    bbox: BBox2D
    depth: float
    fy: float

    def __post_init__(self) -> None:
        if not self.depth > 0:
            raise ValidationError(f"depth must be positive, got {self.depth!r}")
        if not self.fy > 0:
            raise ValidationError(f"fy must be positive, got {self.fy!r}")


@dataclass(frozen=True)
class ScaleEstimate:
    factor: float
    h_est: float
    class_used: str
    n_observations: int

    def __post_init__(self) -> None:
        if not self.factor > 0:
            raise ValidationError(f"scale factor must be positive, got {self.factor!r}")
        if self.n_observations < 1:
            raise ValidationError("a scale estimate needs at least one observation")


def observed_height(obs: HeightObservation) -> float:
    """Metric height implied by a box via similar triangles: h_px * depth / fy."""
    return obs.bbox.height * obs.depth / obs.fy


def estimate_scale(
    observations: list[HeightObservation], classes: list[ReferenceClass]
) -> ScaleEstimate:
    """Estimate one scale factor for a scene from reference-object heights.

    Picks the reference class with the most observations (ties go to the
    taller class, whose relative height error is smaller), drops
    observations whose implied height is wildly off the canonical value,
    and returns canonical_height / mean(observed heights).

    Raises NoReferenceObjectsError when nothing usable remains; callers
    typically fall back to a factor of 1.0 and flag the output.
    """
    by_name = {c.name.lower(): c for c in classes}
    groups: dict[str, list[HeightObservation]] = {}
    for obs in observations:
        key = obs.class_name.lower()
        if key in by_name:
            groups.setdefault(key, []).append(obs)
    if not groups:
        raise NoReferenceObjectsError(
            "no observation matches a known reference class"
        )

    key = max(groups, key=lambda k: (len(groups[k]), by_name[k].canonical_height))
    ref = by_name[key]
    lo, hi = OUTLIER_BAND[0] * ref.canonical_height, OUTLIER_BAND[1] * ref.canonical_height
    heights = [h for h in map(observed_height, groups[key]) if lo <= h <= hi]
    if not heights:
        raise NoReferenceObjectsError(
            f"all {len(groups[key])} observation(s) of {ref.name!r} were outliers"
        )

    h_est = fmean(heights)
    return ScaleEstimate(
        factor=ref.canonical_height / h_est,
        h_est=h_est,
        class_used=ref.name,
        n_observations=len(heights),
    )


def apply_scale(points: list[Point3], s: float) -> list[Point3]:
    """Multiply every coordinate by s (s must be positive and finite)."""
    import math

    if not (math.isfinite(s) and s > 0):
        raise DomainError(f"scale factor must be positive and finite, got {s!r}")
    return [Point3(s * p.x, s * p.y, s * p.z) for p in points]


def match_reference_class(
    expression: str, classes: list[ReferenceClass]
) -> ReferenceClass | None:
    """First class whose name occurs as a whole word in the expression.

    Lets free-text referring expressions ("person crossing the street")
    feed the scale estimator without a separate classifier.
    """
    import re

    lowered = expression.lower()
    for ref in classes:
        if re.search(rf"\b{re.escape(ref.name.lower())}\b", lowered):
            return ref
    return None


def load_reference_classes(path: str | Path | None = None) -> list[ReferenceClass]:
    """Load reference classes from JSON; the packaged defaults when path is None.

    Format: {"classes": [{"name": "person", "canonical_height_m": 1.7}, ...]}
    """
    if path is None:
        text = (
            resources.files("ego3d").joinpath("data/reference_classes.json").read_text("utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
        entries = raw["classes"]
        classes = [
            ReferenceClass(name=e["name"], canonical_height=e["canonical_height_m"])
            for e in entries
        ]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"malformed reference-class file: {exc}") from exc
    if not classes:
        raise ValidationError("reference-class file defines no classes")
    return classes
