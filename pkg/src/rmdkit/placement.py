"""Seeded randomization of object placement for evaluation trials.

The whole object group is treated as one rigid layout around an anchor (the
first object's root). Each trial draws an orientation, a distance from the
agent start, a uniform scale and a bearing for the finish marker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import matrix_to_euler, yaw_matrix
from .scene import Aabb, ObjectPart, ObjectState, Scene, SceneObject

ORIENTATION_RANGE = (0.0, 2.0 * math.pi)
DISTANCE_RANGE = (4.0, 10.0)
SCALE_RANGE = (0.8, 1.2)
FINISH_RADIUS = 3.0
FINISH_MARKER = "finish"


@dataclass(frozen=True)
class Placement:
    orientation: float  # rad, added to every object's yaw
    distance: float  # m, agent start to layout anchor
    scale: float
    bearing: float  # rad, direction from agent start to the anchor
    finish_bearing: float  # rad, direction from the anchor to the finish marker

    def as_dict(self) -> dict:
        return {k: round(float(v), 12) for k, v in self.__dict__.items()}


def sample_placement(rng: np.random.Generator) -> Placement:
    """Draw one placement. ``Generator.uniform`` samples the half-open [low, high)."""
    return Placement(
        orientation=float(rng.uniform(*ORIENTATION_RANGE)),
        distance=float(rng.uniform(*DISTANCE_RANGE)),
        scale=float(rng.uniform(*SCALE_RANGE)),
        bearing=float(rng.uniform(0.0, 2.0 * math.pi)),
        finish_bearing=float(rng.uniform(0.0, 2.0 * math.pi)),
    )


def placement_for_seed(seed: int) -> Placement:
    return sample_placement(np.random.default_rng(seed))


def layout_anchor(scene: Scene) -> np.ndarray:
    if not scene.objects:
        raise ValueError("scene has no objects to place")
    p = scene.objects[0].state.position
    return np.array([p[0], p[1], 0.0])


def _place_object(obj: SceneObject, anchor_old, anchor_new, rot: np.ndarray, pl: Placement) -> SceneObject:
    s = pl.scale
    st = obj.state
    pos = anchor_new + rot @ (s * (st.position - anchor_old))
    state = ObjectState(pos, matrix_to_euler(rot @ st.matrix))
    center = anchor_new + rot @ (s * (obj.aabb.center - anchor_old))
    aabb = Aabb(center, obj.aabb.half_extents * s, obj.aabb.yaw + pl.orientation)
    parts = tuple(ObjectPart(p.name, p.points * s) for p in obj.parts)
    hinge = None if obj.hinge is None else replace(obj.hinge, pivot=obj.hinge.pivot * s)
    return SceneObject(obj.name, aabb, parts, obj.movable, state, hinge)


def apply_placement(scene: Scene, pl: Placement, start_xy=(0.0, 0.0)) -> Scene:
    """Rigidly move, rotate and scale the layout; put the finish marker on a circle."""
    anchor_old = layout_anchor(scene)
    anchor_new = np.array(
        [start_xy[0] + pl.distance * math.cos(pl.bearing), start_xy[1] + pl.distance * math.sin(pl.bearing), 0.0]
    )
    rot = yaw_matrix(pl.orientation)
    objects = tuple(_place_object(o, anchor_old, anchor_new, rot, pl) for o in scene.objects)
    markers = {k: anchor_new + rot @ (pl.scale * (np.asarray(v) - anchor_old)) for k, v in scene.markers.items()}
    markers[FINISH_MARKER] = anchor_new + FINISH_RADIUS * np.array(
        [math.cos(pl.finish_bearing), math.sin(pl.finish_bearing), 0.0]
    )
    return Scene(objects, scene.ground, markers, scene.scene_id)
