from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import scene_path
from rmdkit.placement import (
    DISTANCE_RANGE,
    FINISH_MARKER,
    FINISH_RADIUS,
    ORIENTATION_RANGE,
    SCALE_RANGE,
    apply_placement,
    layout_anchor,
    placement_for_seed,
)
from rmdkit.plan import Relation, TargetSpec
from rmdkit.scene import load_scene_file, resolve_target, scene_to_dict


def out_of_range(seeds) -> int:
    bad = 0
    for s in seeds:
        pl = placement_for_seed(s)
        bad += not (ORIENTATION_RANGE[0] <= pl.orientation < ORIENTATION_RANGE[1])
        bad += not (DISTANCE_RANGE[0] <= pl.distance <= DISTANCE_RANGE[1])
        bad += not (SCALE_RANGE[0] <= pl.scale <= SCALE_RANGE[1])
    return bad


def test_ranges_over_many_seeds():
    assert out_of_range(range(1000)) == 0


def test_same_seed_same_draw():
    assert placement_for_seed(7) == placement_for_seed(7)
    assert placement_for_seed(7) != placement_for_seed(8)


@given(st.integers(0, 2**32 - 1))
def test_layout_is_rigid_similarity(seed):
    scene = load_scene_file(scene_path("couch_box.json"))
    pl = placement_for_seed(seed)
    placed = apply_placement(scene, pl)
    a0, a1 = layout_anchor(scene), layout_anchor(placed)
    assert np.hypot(*a1[:2]) == pytest.approx(pl.distance, abs=1e-9)
    # pairwise distances scale uniformly
    p0 = [o.state.position for o in scene.objects]
    p1 = [o.state.position for o in placed.objects]
    d0, d1 = np.linalg.norm(p0[1] - p0[0]), np.linalg.norm(p1[1] - p1[0])
    assert d1 == pytest.approx(pl.scale * d0, rel=1e-9)
    # the finish marker sits on a circle around the anchor
    assert np.linalg.norm(placed.markers[FINISH_MARKER] - a1) == pytest.approx(FINISH_RADIUS, abs=1e-9)
    for o0, o1 in zip(scene.objects, placed.objects):
        assert o1.aabb.size == pytest.approx(pl.scale * o0.aabb.size)
        assert math.cos(o1.state.yaw - o0.state.yaw - pl.orientation) == pytest.approx(1.0, abs=1e-9)
    assert a0[2] == a1[2] == 0.0


def test_targets_move_with_layout():
    scene = load_scene_file(scene_path("couch_box.json"))
    pl = placement_for_seed(3)
    placed = apply_placement(scene, pl)
    spec = TargetSpec("couch", Relation.FORWARD)
    rel0 = resolve_target(spec, scene) - scene.objects_by_name["couch"].state.position
    rel1 = resolve_target(spec, placed) - placed.objects_by_name["couch"].state.position
    assert np.linalg.norm(rel1) == pytest.approx(pl.scale * np.linalg.norm(rel0))


def test_placed_scene_bytes_stable():
    scene = load_scene_file(scene_path("door.json"))
    a = scene_to_dict(apply_placement(scene, placement_for_seed(11)))
    b = scene_to_dict(apply_placement(scene, placement_for_seed(11)))
    assert a == b
