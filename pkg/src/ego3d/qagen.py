"""Rule-based spatial QA generation from scene ground truth.

A scene source file lists uniquely captioned objects with 3D centers in
the ego frame (x right, y down, z forward, meters). From it we generate
five question categories, each answered by a closed-form rule over the
geometry:

* absolute distance (ego->object and object->object), as 4-way multiple
  choice and as open numeric answers in meters,
* relative distance (which of two objects is closer), 2-way choice,
* localization (which quadrant of an anchor object's frame another
  object falls in), 4-way choice,
* motion (does a cardinal-direction move bring the mover closer), yes/no,
* travel time at a stated speed, 4-way multiple choice.

All randomness (distractor values, move distances, speeds) comes from a
PCG64 generator seeded with the caller's 64-bit seed mixed with a fixed
per-category constant, so identical (scene, seed) inputs reproduce the
item stream byte for byte and two categories never share a stream.

Conventions baked into the question text:
* cardinal frame: north is ego forward (+z), east is ego right (+x);
  every motion question restates this so it needs no outside context,
* an object's view is the first view it is listed as visible in,
* meters and seconds are written with one decimal.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations, permutations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ego3d.errors import DistractorError, ValidationError
from ego3d.geometry import Point3, View, parse_view


class Category(str, Enum):
    ABS_DIST = "AbsDist"
    REL_DIST = "RelDist"
    LOCALIZATION = "Localization"
    MOTION = "Motion"
    TRAVEL_TIME = "TravelTime"


class Perspective(str, Enum):
    EGO = "Ego"
    OBJECT = "Object"


class Form(str, Enum):
    MULTI_CHOICE = "MultiChoice"
    ABSOLUTE_METERS = "AbsoluteMeters"
    YES_NO = "YesNo"


_FORM_SLUG = {Form.MULTI_CHOICE: "mc", Form.ABSOLUTE_METERS: "abs", Form.YES_NO: "yn"}

# stream separators mixed into the rng seed, one per (category, perspective)
_STREAM = {
    (Category.ABS_DIST, Perspective.EGO): 11,
    (Category.ABS_DIST, Perspective.OBJECT): 12,
    (Category.REL_DIST, Perspective.EGO): 21,
    (Category.REL_DIST, Perspective.OBJECT): 22,
    (Category.LOCALIZATION, Perspective.OBJECT): 32,
    (Category.MOTION, Perspective.EGO): 41,
    (Category.MOTION, Perspective.OBJECT): 42,
    (Category.TRAVEL_TIME, Perspective.EGO): 51,
    (Category.TRAVEL_TIME, Perspective.OBJECT): 52,
}

DISTANCE_OPTION_GAP_M = 8.0
TIME_OPTION_GAP_S = 3.0
TIME_OPTION_REL_GAP = 0.30
REL_DIST_TIE_GUARD_M = 1.0
MOTION_TIE_GUARD_M = 0.25
LOCALIZATION_BOUNDARY_DEG = 10.0
MOVE_RANGE_M = (2.0, 5.0)

SPEED_TABLE_MPS = {"pedestrian": 1.5, "cyclist": 5.0, "vehicle": 10.0}

CARDINAL_DIRS = {
    "north": (0.0, 1.0),  # (x, z) ground-plane unit vectors
    "east": (1.0, 0.0),
    "south": (0.0, -1.0),
    "west": (-1.0, 0.0),
}
CARDINAL_NOTE = (
    "Here, north is the ego vehicle's forward direction, east is its right, "
    "south is its backward direction, and west is its left."
)

QUADRANTS = ("front-left", "front-right", "rear-left", "rear-right")
YES_NO_OPTIONS = ("yes", "no")


@dataclass(frozen=True)
class SceneObject:
    id: str
    caption: str
    center: Point3
    views: tuple[View, ...]
    yaw: float | None = None
    size: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("scene object needs an id")
        if not self.caption:
            raise ValidationError(f"object {self.id}: caption must be non-empty")
        if not self.views:
            raise ValidationError(f"object {self.id}: must be visible in some view")

    @property
    def view(self) -> View:
        """The object's primary view: the first it is listed as visible in."""
        return self.views[0]


@dataclass(frozen=True)
class SceneSource:
    scene_id: str
    objects: tuple[SceneObject, ...]
    rig: tuple[View, ...]

    def __post_init__(self) -> None:
        if not self.scene_id:
            raise ValidationError("scene needs a scene_id")
        captions = [o.caption for o in self.objects]
        if len(set(captions)) != len(captions):
            raise ValidationError(f"scene {self.scene_id}: captions must be unique")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"scene {self.scene_id}: object ids must be unique")

    def by_id(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise ValidationError(f"scene {self.scene_id}: no object {object_id!r}")


@dataclass(frozen=True)
class QAItem:
    id: str
    category: Category
    perspective: Perspective
    form: Form
    question: str
    options: tuple[str, ...]
    answer: int | str | float
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.form is Form.MULTI_CHOICE:
            if not isinstance(self.answer, int) or not 0 <= self.answer < len(self.options):
                raise ValidationError(f"{self.id}: answer must index an option")
        elif self.form is Form.YES_NO:
            if tuple(self.options) != YES_NO_OPTIONS or self.answer not in YES_NO_OPTIONS:
                raise ValidationError(f"{self.id}: yes/no item malformed")
        elif self.form is Form.ABSOLUTE_METERS:
            if self.options or not isinstance(self.answer, float):
                raise ValidationError(f"{self.id}: open numeric item carries no options")


def _rng(seed: int, category: Category, perspective: Perspective) -> np.random.Generator:
    return np.random.default_rng([seed, _STREAM[(category, perspective)]])


def _dist(a: Point3, b: Point3) -> float:
    return math.dist((a.x, a.y, a.z), (b.x, b.y, b.z))


_ORIGIN = Point3(0.0, 0.0, 0.0)


def _fmt(value: float) -> str:
    return f"{round(value, 1) + 0.0:.1f}"


def _phrase(obj: SceneObject) -> str:
    return f"the {obj.caption} in the {obj.view.phrase} view"


def make_distractors(
    gt: float,
    n: int,
    min_gap: float,
    bounds: tuple[float, float],
    rng: np.random.Generator,
    min_rel_gap: float = 0.0,
) -> tuple[list[float], int]:
    """Build n option values (gt included), pairwise separated, shuffled.

    Values are rounded to one decimal before the gap check so the gaps
    hold for the numbers actually printed in the question. Gaps must be
    at least min_gap in absolute terms and, when min_rel_gap is set, at
    least that fraction of the smaller value. Returns (values, gt index).
    """
    if n < 2:
        raise ValidationError("need at least two options")
    lo, hi = bounds
    if not lo < hi:
        raise ValidationError(f"bad bounds {bounds}")
    values = [round(gt, 1)]

    def compatible(candidate: float) -> bool:
        if candidate <= 0:
            return False
        for v in values:
            gap = abs(candidate - v)
            if gap < min_gap - 1e-9:
                return False
            if min_rel_gap and gap < min_rel_gap * min(candidate, v) - 1e-9:
                return False
        return True

    attempts = 0
    while len(values) < n:
        attempts += 1
        if attempts > 2000:
            raise DistractorError(
                f"could not place {n} options with gap {min_gap} in {bounds}"
            )
        candidate = round(float(rng.uniform(lo, hi)), 1)
        if compatible(candidate):
            values.append(candidate)
    order = rng.permutation(n)
    shuffled = [values[i] for i in order]
    return shuffled, shuffled.index(round(gt, 1))


def _distance_options(gt: float, rng: np.random.Generator) -> tuple[list[str], int]:
    margin = 3 * DISTANCE_OPTION_GAP_M * 2.5
    values, idx = make_distractors(
        gt, 4, DISTANCE_OPTION_GAP_M, (max(0.1, gt - margin), gt + margin), rng
    )
    return [f"{_fmt(v)} m" for v in values], idx


def _time_options(gt: float, rng: np.random.Generator) -> tuple[list[str], int]:
    margin = max(3 * TIME_OPTION_GAP_S * 2.5, 2.0 * gt)
    values, idx = make_distractors(
        gt,
        4,
        TIME_OPTION_GAP_S,
        (max(0.1, gt - margin), gt + margin),
        rng,
        min_rel_gap=TIME_OPTION_REL_GAP,
    )
    return [f"{_fmt(v)} s" for v in values], idx


def gen_abs_distance(
    scene: SceneSource,
    perspective: Perspective,
    form: Form = Form.MULTI_CHOICE,
    rng_seed: int = 0,
) -> list[QAItem]:
    if form not in (Form.MULTI_CHOICE, Form.ABSOLUTE_METERS):
        raise ValidationError("absolute distance items are MultiChoice or AbsoluteMeters")
    rng = _rng(rng_seed, Category.ABS_DIST, perspective)
    items: list[QAItem] = []

    if perspective is Perspective.EGO:
        cases = [
            (None, obj, _dist(_ORIGIN, obj.center), {"objects": [obj.id]})
            for obj in scene.objects
        ]
    else:
        cases = []
        for a, b in combinations(scene.objects, 2):
            if a.view == b.view:
                continue
            cases.append((a, b, _dist(a.center, b.center), {"objects": [a.id, b.id]}))

    for a, b, gt, meta in cases:
        if a is None:
            question = f"How far are you from {_phrase(b)}?"
        else:
            question = f"How far is {_phrase(a)} from {_phrase(b)}?"
        meta = {"scene_id": scene.scene_id, **meta}
        item_id = (
            f"{scene.scene_id}:{Category.ABS_DIST.value}:{perspective.value}:"
            f"{_FORM_SLUG[form]}:{len(items):03d}"
        )
        if form is Form.MULTI_CHOICE:
            options, answer = _distance_options(gt, rng)
            question += " Choose the closest value."
            items.append(
                QAItem(
                    id=item_id,
                    category=Category.ABS_DIST,
                    perspective=perspective,
                    form=form,
                    question=question,
                    options=tuple(options),
                    answer=answer,
                    meta={**meta, "gt_m": gt},
                )
            )
        else:
            question += " Answer with a single number in meters."
            items.append(
                QAItem(
                    id=item_id,
                    category=Category.ABS_DIST,
                    perspective=perspective,
                    form=form,
                    question=question,
                    options=(),
                    answer=gt,
                    meta={**meta, "gt_m": gt},
                )
            )
    return items


def gen_rel_distance(
    scene: SceneSource, perspective: Perspective, rng_seed: int = 0
) -> list[QAItem]:
    items: list[QAItem] = []

    if perspective is Perspective.EGO:
        cases = [
            (None, a, b) for a, b in combinations(scene.objects, 2)
        ]
    else:
        cases = [
            (anchor, a, b)
            for anchor in scene.objects
            for a, b in combinations(
                [o for o in scene.objects if o.id != anchor.id], 2
            )
        ]

    for anchor, a, b in cases:
        origin = _ORIGIN if anchor is None else anchor.center
        d_a, d_b = _dist(origin, a.center), _dist(origin, b.center)
        if abs(d_a - d_b) < REL_DIST_TIE_GUARD_M:
            continue
        if anchor is None:
            question = f"Which object is closer to you: {_phrase(a)} or {_phrase(b)}?"
            meta = {"candidates": [a.id, b.id]}
        else:
            question = (
                f"Which object is closer to {_phrase(anchor)}: "
                f"{_phrase(a)} or {_phrase(b)}?"
            )
            meta = {"anchor": anchor.id, "candidates": [a.id, b.id]}
        items.append(
            QAItem(
                id=(
                    f"{scene.scene_id}:{Category.REL_DIST.value}:{perspective.value}:"
                    f"mc:{len(items):03d}"
                ),
                category=Category.REL_DIST,
                perspective=perspective,
                form=Form.MULTI_CHOICE,
                question=question,
                options=(a.caption, b.caption),
                answer=0 if d_a < d_b else 1,
                meta={"scene_id": scene.scene_id, **meta},
            )
        )
    return items


def _heading_xz(anchor: SceneObject) -> tuple[float, float]:
    """Anchor's facing on the ground plane.

    Annotated yaw follows the camera-ring convention (0 faces ego forward,
    positive turns toward ego right). Without a yaw the anchor is taken to
    face directly away from the ego, along the ego->anchor bearing.
    """
    if anchor.yaw is not None:
        return math.sin(anchor.yaw), math.cos(anchor.yaw)
    hx, hz = anchor.center.x, anchor.center.z
    norm = math.hypot(hx, hz)
    if norm < 1e-9:
        return 0.0, 1.0
    return hx / norm, hz / norm


def bearing_deg(subject: SceneObject, anchor: SceneObject) -> float:
    """Signed bearing of subject from anchor, degrees, positive to the left."""
    hx, hz = _heading_xz(anchor)
    rx = subject.center.x - anchor.center.x
    rz = subject.center.z - anchor.center.z
    forward = rx * hx + rz * hz
    left = -rx * hz + rz * hx
    return math.degrees(math.atan2(left, forward))


def quadrant_of(bearing: float) -> str:
    if 0 < bearing < 90:
        return "front-left"
    if -90 < bearing < 0:
        return "front-right"
    if 90 < bearing < 180:
        return "rear-left"
    return "rear-right"


def _near_boundary(bearing: float) -> bool:
    distance_to_boundary = min(
        abs(bearing), abs(abs(bearing) - 90.0), abs(abs(bearing) - 180.0)
    )
    return distance_to_boundary < LOCALIZATION_BOUNDARY_DEG


def gen_localization(scene: SceneSource, rng_seed: int = 0) -> list[QAItem]:
    items: list[QAItem] = []
    for subject, anchor in permutations(scene.objects, 2):
        if math.hypot(
            subject.center.x - anchor.center.x, subject.center.z - anchor.center.z
        ) < 1e-9:
            continue
        bearing = bearing_deg(subject, anchor)
        if _near_boundary(bearing):
            continue
        facing = (
            "facing along its own heading"
            if anchor.yaw is not None
            else "facing directly away from you"
        )
        question = (
            f"From the perspective of {_phrase(anchor)}, {facing}, "
            f"where is {_phrase(subject)} located?"
        )
        items.append(
            QAItem(
                id=(
                    f"{scene.scene_id}:{Category.LOCALIZATION.value}:"
                    f"{Perspective.OBJECT.value}:mc:{len(items):03d}"
                ),
                category=Category.LOCALIZATION,
                perspective=Perspective.OBJECT,
                form=Form.MULTI_CHOICE,
                question=question,
                options=QUADRANTS,
                answer=QUADRANTS.index(quadrant_of(bearing)),
                meta={
                    "scene_id": scene.scene_id,
                    "subject": subject.id,
                    "anchor": anchor.id,
                },
            )
        )
    return items


def moved_center(center: Point3, direction: str, move_m: float) -> Point3:
    dx, dz = CARDINAL_DIRS[direction]
    return Point3(center.x + move_m * dx, center.y, center.z + move_m * dz)


def gen_motion(
    scene: SceneSource, perspective: Perspective, rng_seed: int = 0
) -> list[QAItem]:
    rng = _rng(rng_seed, Category.MOTION, perspective)
    items: list[QAItem] = []

    if perspective is Perspective.EGO:
        cases = [(None, target) for target in scene.objects]
    else:
        cases = [
            (mover, target)
            for mover, target in permutations(scene.objects, 2)
        ]

    for mover, target in cases:
        start = _ORIGIN if mover is None else mover.center
        for direction in CARDINAL_DIRS:
            move_m = round(float(rng.uniform(*MOVE_RANGE_M)), 1)
            before = _dist(start, target.center)
            after = _dist(moved_center(start, direction, move_m), target.center)
            if abs(after - before) < MOTION_TIE_GUARD_M:
                continue
            if mover is None:
                question = (
                    f"Suppose you move {_fmt(move_m)} meters {direction}. "
                    f"{CARDINAL_NOTE} Will you then be closer to "
                    f"{_phrase(target)} than you are now?"
                )
                meta = {"mover": "ego"}
            else:
                question = (
                    f"Suppose {_phrase(mover)} moves {_fmt(move_m)} meters "
                    f"{direction}. {CARDINAL_NOTE} Will it then be closer to "
                    f"{_phrase(target)} than it is now?"
                )
                meta = {"mover": mover.id}
            items.append(
                QAItem(
                    id=(
                        f"{scene.scene_id}:{Category.MOTION.value}:{perspective.value}:"
                        f"yn:{len(items):03d}"
                    ),
                    category=Category.MOTION,
                    perspective=perspective,
                    form=Form.YES_NO,
                    question=question,
                    options=YES_NO_OPTIONS,
                    answer="yes" if after < before else "no",
                    meta={
                        "scene_id": scene.scene_id,
                        **meta,
                        "target": target.id,
                        "direction": direction,
                        "move_m": move_m,
                    },
                )
            )
    return items


def gen_travel_time(
    scene: SceneSource, perspective: Perspective, rng_seed: int = 0
) -> list[QAItem]:
    rng = _rng(rng_seed, Category.TRAVEL_TIME, perspective)
    items: list[QAItem] = []

    if perspective is Perspective.EGO:
        cases = [(None, target) for target in scene.objects]
    else:
        cases = list(permutations(scene.objects, 2))

    mover_classes = sorted(SPEED_TABLE_MPS)
    for mover, target in cases:
        start = _ORIGIN if mover is None else mover.center
        mover_class = mover_classes[int(rng.integers(len(mover_classes)))]
        speed = SPEED_TABLE_MPS[mover_class]
        gt = _dist(start, target.center) / speed
        options, answer = _time_options(gt, rng)
        if mover is None:
            question = (
                f"Moving in a straight line at a constant speed of {_fmt(speed)} m/s, "
                f"how long would it take you to reach {_phrase(target)}? "
                f"Choose the closest value."
            )
            meta = {"mover": "ego"}
        else:
            question = (
                f"Moving in a straight line at a constant speed of {_fmt(speed)} m/s, "
                f"how long would {_phrase(mover)} take to reach {_phrase(target)}? "
                f"Choose the closest value."
            )
            meta = {"mover": mover.id}
        items.append(
            QAItem(
                id=(
                    f"{scene.scene_id}:{Category.TRAVEL_TIME.value}:{perspective.value}:"
                    f"mc:{len(items):03d}"
                ),
                category=Category.TRAVEL_TIME,
                perspective=perspective,
                form=Form.MULTI_CHOICE,
                question=question,
                options=tuple(options),
                answer=answer,
                meta={
                    "scene_id": scene.scene_id,
                    **meta,
                    "target": target.id,
                    "speed_mps": speed,
                    "gt_s": gt,
                },
            )
        )
    return items


ALL_CATEGORIES = tuple(Category)
ALL_PERSPECTIVES = tuple(Perspective)


def generate_qaset(
    scenes: Iterable[SceneSource],
    seed: int,
    categories: Sequence[Category] = ALL_CATEGORIES,
    perspectives: Sequence[Perspective] = ALL_PERSPECTIVES,
) -> list[QAItem]:
    """All items for all scenes, merged in scene-id order."""
    items: list[QAItem] = []
    for scene in sorted(scenes, key=lambda s: s.scene_id):
        for category in categories:
            if category is Category.ABS_DIST:
                for perspective in perspectives:
                    for form in (Form.MULTI_CHOICE, Form.ABSOLUTE_METERS):
                        items.extend(gen_abs_distance(scene, perspective, form, seed))
            elif category is Category.REL_DIST:
                for perspective in perspectives:
                    items.extend(gen_rel_distance(scene, perspective, seed))
            elif category is Category.LOCALIZATION:
                items.extend(gen_localization(scene, seed))
            elif category is Category.MOTION:
                for perspective in perspectives:
                    items.extend(gen_motion(scene, perspective, seed))
            elif category is Category.TRAVEL_TIME:
                for perspective in perspectives:
                    items.extend(gen_travel_time(scene, perspective, seed))
    return items


_NUMBER = r"-?\d+\.\d"
TEMPLATE_PATTERNS = {
    Category.ABS_DIST: re.compile(
        r"^How far (are you from|is the .+ in the [a-z-]+ view from) the .+ in the "
        r"[a-z-]+ view\? (Choose the closest value\.|Answer with a single number in meters\.)$"
    ),
    Category.REL_DIST: re.compile(
        r"^Which object is closer to (you|the .+ in the [a-z-]+ view): "
        r"the .+ in the [a-z-]+ view or the .+ in the [a-z-]+ view\?$"
    ),
    Category.LOCALIZATION: re.compile(
        r"^From the perspective of the .+ in the [a-z-]+ view, "
        r"(facing along its own heading|facing directly away from you), "
        r"where is the .+ in the [a-z-]+ view located\?$"
    ),
    Category.MOTION: re.compile(
        rf"^Suppose (you|the .+ in the [a-z-]+ view) moves? {_NUMBER} meters "
        rf"(north|east|south|west)\. {re.escape(CARDINAL_NOTE)} "
        rf"Will (you|it) then be closer to the .+ in the [a-z-]+ view than "
        rf"(you are|it is) now\?$"
    ),
    Category.TRAVEL_TIME: re.compile(
        rf"^Moving in a straight line at a constant speed of {_NUMBER} m/s, "
        rf"how long would (it take you|the .+ in the [a-z-]+ view take) to reach "
        rf"the .+ in the [a-z-]+ view\? Choose the closest value\.$"
    ),
}


def _parse_option_value(text: str) -> float:
    match = re.fullmatch(r"(-?\d+(?:\.\d+)?) (?:m|s)", text)
    if match is None:
        raise ValidationError(f"option {text!r} is not a numeric value")
    return float(match.group(1))


def validate_qaset(items: Sequence[QAItem]) -> list[str]:
    """Check every item invariant; returns human-readable violations."""
    problems: list[str] = []
    seen_ids: set[str] = set()
    for item in items:
        if item.id in seen_ids:
            problems.append(f"{item.id}: duplicate item id")
        seen_ids.add(item.id)
        if "{" in item.question or "}" in item.question:
            problems.append(f"{item.id}: unsubstituted placeholder in question")
        pattern = TEMPLATE_PATTERNS[item.category]
        if not pattern.match(item.question):
            problems.append(f"{item.id}: question does not match its template")
        if item.form is Form.MULTI_CHOICE:
            if len(set(item.options)) != len(item.options):
                problems.append(f"{item.id}: duplicate options")
            if item.category in (Category.ABS_DIST, Category.TRAVEL_TIME):
                min_gap = (
                    DISTANCE_OPTION_GAP_M
                    if item.category is Category.ABS_DIST
                    else TIME_OPTION_GAP_S
                )
                try:
                    values = [_parse_option_value(o) for o in item.options]
                except ValidationError as exc:
                    problems.append(f"{item.id}: {exc}")
                    continue
                if len(values) != 4:
                    problems.append(f"{item.id}: expected 4 options")
                for x, y in combinations(values, 2):
                    if abs(x - y) < min_gap - 1e-9:
                        problems.append(
                            f"{item.id}: options {x} and {y} closer than {min_gap}"
                        )
                gt = item.meta.get("gt_m", item.meta.get("gt_s"))
                if gt is not None and abs(values[item.answer] - gt) > 0.05 + 1e-9:
                    problems.append(f"{item.id}: answer option disagrees with ground truth")
        elif item.form is Form.ABSOLUTE_METERS:
            if not (isinstance(item.answer, float) and item.answer >= 0):
                problems.append(f"{item.id}: numeric answer must be non-negative meters")
    return problems


# ---------------------------------------------------------------------------
# file formats


def scene_from_dict(raw: dict) -> SceneSource:
    try:
        objects = tuple(
            SceneObject(
                id=o["id"],
                caption=o["caption"],
                center=Point3(*o["center"]),
                views=tuple(parse_view(v) for v in o["views"]),
                yaw=o.get("yaw"),
                size=tuple(o["size"]) if o.get("size") is not None else None,
            )
            for o in raw["objects"]
        )
        return SceneSource(
            scene_id=raw["scene_id"],
            objects=objects,
            rig=tuple(parse_view(v) for v in raw["rig"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed scene source: {exc}") from exc


def scene_to_dict(scene: SceneSource) -> dict:
    return {
        "scene_id": scene.scene_id,
        "rig": [v.value for v in scene.rig],
        "objects": [
            {
                "id": o.id,
                "caption": o.caption,
                "center": [o.center.x, o.center.y, o.center.z],
                "views": [v.value for v in o.views],
                "yaw": o.yaw,
                "size": list(o.size) if o.size is not None else None,
            }
            for o in scene.objects
        ],
    }


def load_scene(path: str | Path) -> SceneSource:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scene file {path} is not valid JSON: {exc}") from exc
    return scene_from_dict(raw)


def save_scene(scene: SceneSource, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(scene_to_dict(scene), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def item_to_dict(item: QAItem) -> dict:
    return {
        "id": item.id,
        "category": item.category.value,
        "perspective": item.perspective.value,
        "form": item.form.value,
        "question": item.question,
        "options": list(item.options),
        "answer": item.answer,
        "meta": item.meta,
    }


def item_from_dict(raw: dict) -> QAItem:
    try:
        return QAItem(
            id=raw["id"],
            category=Category(raw["category"]),
            perspective=Perspective(raw["perspective"]),
            form=Form(raw["form"]),
            question=raw["question"],
            options=tuple(raw["options"]),
            answer=raw["answer"],
            meta=raw.get("meta", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed QA item: {exc}") from exc


def write_qa_jsonl(items: Iterable[QAItem], path: str | Path) -> None:
    lines = [json.dumps(item_to_dict(i), sort_keys=True) for i in items]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_qa_jsonl(path: str | Path) -> list[QAItem]:
    items = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            items.append(item_from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
    return items
