"""Shared scene builders for generator, oracle, and acceptance tests."""

from __future__ import annotations

import math

import numpy as np

from ego3d.geometry import RING_ORDER, Point3, View
from ego3d.qagen import SceneObject, SceneSource

CAPTION_POOL = (
    "red sedan",
    "pedestrian in a yellow coat",
    "blue delivery truck",
    "traffic cone",
    "cyclist with a helmet",
    "white camper van",
    "stop sign",
    "black motorcycle",
)


def demo_scene() -> SceneSource:
    objects = (
        SceneObject("o1", "red sedan", Point3(0.0, 0.0, 12.0), (View.FRONT,), yaw=0.0),
        SceneObject("o2", "pedestrian", Point3(8.0, 0.0, 8.0), (View.FRONT_RIGHT,)),
        SceneObject(
            "o3", "blue truck", Point3(-15.0, 0.0, -2.0), (View.LEFT,), yaw=math.pi / 2
        ),
        SceneObject("o4", "traffic cone", Point3(2.0, 0.0, 40.0), (View.FRONT,)),
    )
    return SceneSource("demo", objects, RING_ORDER)


def make_random_scene(
    rng: np.random.Generator, n_objects: int = 5, scene_id: str = "rand"
) -> SceneSource:
    """A scene with objects scattered on an annulus around the ego.

    Positions avoid the immediate origin so distances are well separated
    from zero; about half the objects get an annotated yaw.
    """
    objects = []
    for i in range(n_objects):
        radius = float(rng.uniform(4.0, 60.0))
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        center = Point3(
            radius * math.sin(angle), float(rng.uniform(-1.0, 1.0)), radius * math.cos(angle)
        )
        yaw = float(rng.uniform(0.0, 2.0 * math.pi)) if rng.random() < 0.5 else None
        view = RING_ORDER[int(rng.integers(len(RING_ORDER)))]
        objects.append(
            SceneObject(
                id=f"obj{i}",
                caption=f"{CAPTION_POOL[i % len(CAPTION_POOL)]} #{i}",
                center=center,
                views=(view,),
                yaw=yaw,
            )
        )
    return SceneSource(scene_id, tuple(objects), RING_ORDER)
