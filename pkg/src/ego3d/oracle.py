"""Ground-truth answerer that recomputes every answer from scene geometry.

This module deliberately does not read ``QAItem.answer``. It re-derives
the answer from the scene's object centers and the item's metadata
(object ids, direction, move distance, speed) using its own formulas, so
it can serve as a cross-check on the generators: scoring its predictions
must give 100% accuracy and zero numeric error on any sound QA set.

Where the generators use ``math.dist`` and ``atan2`` bearings, this
module uses numpy norms and dot/cross sign tests; agreement between the
two is therefore more than running the same code twice.
"""

from __future__ import annotations

import math
import re

import numpy as np

from ego3d.errors import ValidationError
from ego3d.qagen import (
    CARDINAL_DIRS,
    Category,
    Form,
    QAItem,
    SceneSource,
)

_EGO = np.zeros(3)


def _center(scene: SceneSource, object_id: str) -> np.ndarray:
    obj = scene.by_id(object_id)
    return np.array([obj.center.x, obj.center.y, obj.center.z])


def _mover_position(scene: SceneSource, mover: str) -> np.ndarray:
    return _EGO if mover == "ego" else _center(scene, mover)


def _option_value(text: str) -> float:
    match = re.search(r"-?\d+(?:\.\d+)?", text)
    if match is None:
        raise ValidationError(f"option {text!r} has no numeric value")
    return float(match.group(0))


def _heading(scene: SceneSource, anchor_id: str) -> np.ndarray:
    obj = scene.by_id(anchor_id)
    if obj.yaw is not None:
        return np.array([math.sin(obj.yaw), math.cos(obj.yaw)])
    ground = np.array([obj.center.x, obj.center.z])
    norm = np.linalg.norm(ground)
    return np.array([0.0, 1.0]) if norm < 1e-9 else ground / norm


def oracle_value(item: QAItem, scene: SceneSource) -> str | float:
    """The ground-truth answer, recomputed: option text, yes/no, or meters."""
    meta = item.meta

    if item.category is Category.ABS_DIST:
        ids = meta["objects"]
        if len(ids) == 1:
            d = float(np.linalg.norm(_center(scene, ids[0])))
        else:
            d = float(np.linalg.norm(_center(scene, ids[0]) - _center(scene, ids[1])))
        if item.form is Form.ABSOLUTE_METERS:
            return d
        return min(item.options, key=lambda o: abs(_option_value(o) - d))

    if item.category is Category.REL_DIST:
        origin = (
            _center(scene, meta["anchor"]) if "anchor" in meta else _EGO
        )
        a, b = meta["candidates"]
        d_a = float(np.linalg.norm(_center(scene, a) - origin))
        d_b = float(np.linalg.norm(_center(scene, b) - origin))
        winner = a if d_a < d_b else b
        return scene.by_id(winner).caption

    if item.category is Category.LOCALIZATION:
        heading = _heading(scene, meta["anchor"])
        delta = _center(scene, meta["subject"]) - _center(scene, meta["anchor"])
        r = np.array([delta[0], delta[2]])
        in_front = float(np.dot(r, heading)) > 0
        # 2D cross product heading x r; positive means r lies to the left
        on_left = float(heading[0] * r[1] - heading[1] * r[0]) > 0
        return ("front-" if in_front else "rear-") + ("left" if on_left else "right")

    if item.category is Category.MOTION:
        start = _mover_position(scene, meta["mover"])
        target = _center(scene, meta["target"])
        dx, dz = CARDINAL_DIRS[meta["direction"]]
        moved = start + meta["move_m"] * np.array([dx, 0.0, dz])
        closer = np.linalg.norm(moved - target) < np.linalg.norm(start - target)
        return "yes" if closer else "no"

    if item.category is Category.TRAVEL_TIME:
        start = _mover_position(scene, meta["mover"])
        t = float(np.linalg.norm(_center(scene, meta["target"]) - start)) / meta["speed_mps"]
        return min(item.options, key=lambda o: abs(_option_value(o) - t))

    raise ValidationError(f"unknown category {item.category!r}")


def oracle_option_index(item: QAItem, scene: SceneSource) -> int:
    if item.form is not Form.MULTI_CHOICE:
        raise ValidationError(f"{item.id} is not multiple choice")
    return item.options.index(oracle_value(item, scene))


def oracle_answer_text(item: QAItem, scene: SceneSource) -> str:
    """The answer as it should appear inside a reply's answer block."""
    value = oracle_value(item, scene)
    if item.form is Form.MULTI_CHOICE:
        return chr(ord("A") + item.options.index(value))
    if item.form is Form.YES_NO:
        return str(value)
    return f"{value:.6f}"
