from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from conftest import plan_path, scene_path
from rmdkit.executor import stage_targets
from rmdkit.goal import (
    PROPRIO_DIM,
    agent_frame,
    edge_features,
    encode_goal,
    encode_proprioception,
    focus_object,
    from_agent_frame,
    goal_dim,
    goal_slot_names,
    to_agent_frame,
)
from rmdkit.plan import EdgeSpec, InteractionStep, MovementDynamic, Relation, RmdGraphSpec, TargetSpec, load_plan
from rmdkit.scene import AgentState, ObjectState, load_scene_file, scene_from_dict
from rmdkit.sim import posed_agent
from worlds import random_agent, random_states, transform

SEAT = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]


def bench(movable=False, state=None):
    doc = {
        "objects": [
            {
                "name": "bench",
                "movable": movable,
                "aabb": {"center": [0, 0, 1], "size": [2.2, 1, 1], "yaw": 0},
                "parts": [{"name": "seat", "points": SEAT}],
            }
        ]
    }
    scene = scene_from_dict(doc)
    if state is not None:
        scene = scene.with_objects([replace(scene.objects[0], state=state)])
    return scene


def hand_at(xyz, yaw=0.0):
    a = posed_agent(yaw=yaw)
    pos = a.positions.copy()
    pos[8] = xyz  # right_hand
    return AgentState.at_rest(pos, a.rotations)


def step_with(edges, obj=None):
    return InteractionStep(
        "t",
        TargetSpec("bench", Relation.FORWARD),
        obj,
        RmdGraphSpec(tuple(EdgeSpec(h, o, MovementDynamic(d)) for h, o, d in edges)),
    )


def test_agent_frame_examples():
    a = AgentState.at_rest(posed_agent().positions - posed_agent().root_position + [2, 3, 1])
    f = agent_frame(a)
    assert np.array_equal(f.origin, [2, 3, 0]) and f.yaw == 0.0
    assert agent_frame(posed_agent(yaw=math.pi / 2)).yaw == pytest.approx(math.pi / 2, abs=1e-12)


def test_agent_frame_yaw_matches_forward_axis(rng):
    for q in Rotation.random(200, random_state=7).as_quat():
        a = posed_agent()
        agent = AgentState.at_rest(a.positions, np.tile(q, (15, 1)))
        fwd = Rotation.from_quat(q).apply([1, 0, 0])
        if math.hypot(fwd[0], fwd[1]) < 1e-6:
            continue
        assert agent_frame(agent).yaw == pytest.approx(math.atan2(fwd[1], fwd[0]), abs=1e-9)


def test_degenerate_heading_falls_back():
    up = Rotation.from_euler("y", -90, degrees=True).as_quat()  # body x axis straight up
    a = AgentState.at_rest(posed_agent().positions, np.tile(up, (15, 1)))
    assert agent_frame(a).yaw == 0.0
    assert agent_frame(a, prev_yaw=1.25).yaw == 1.25


def test_to_agent_frame_examples():
    f = agent_frame(posed_agent((2, 3), yaw=math.pi / 2))
    assert to_agent_frame(f.origin, f) == pytest.approx([0, 0, 0], abs=1e-12)
    assert to_agent_frame([1, 0, 0], f, "direction") == pytest.approx([0, -1, 0], abs=1e-12)
    with pytest.raises(ValueError):
        to_agent_frame([1, 0, 0], f, "normal")


@given(
    st.floats(-math.pi, math.pi),
    st.tuples(*[st.floats(-50, 50)] * 3),
    st.sampled_from(["point", "direction"]),
    st.tuples(st.floats(-10, 10), st.floats(-10, 10)),
)
def test_agent_frame_inverse(yaw, v, kind, xy):
    f = agent_frame(posed_agent(xy, yaw))
    assert from_agent_frame(to_agent_frame(v, f, kind), f, kind) == pytest.approx(v, abs=1e-12)


def test_edge_features_contact_is_zero():
    feats = edge_features(step_with([("right_hand", "seat", 0)]), bench(), hand_at([1.0, 0, 1]))
    assert np.array_equal(feats[0].rel_position, [0, 0, 0]) and np.array_equal(feats[0].rel_velocity, [0, 0, 0])
    assert np.array_equal(feats[0].dynamic_onehot, [1, 0, 0, 0])


def test_edge_features_offset():
    feats = edge_features(step_with([("right_hand", "seat", 1)]), bench(), hand_at([2.0, 0, 1]))
    assert feats[0].rel_position == pytest.approx([-1, 0, 0])
    # seat points sit at (0,0,1) and (1,0,1) in the world; the first is nearest
    feats = edge_features(step_with([("right_hand", "seat", 1)]), bench(), hand_at([0.0, 0, 0]))
    assert feats[0].rel_position == pytest.approx([0, 0, 1])


@pytest.mark.parametrize("yaw, expected", [(0.0, [1, 0, 0]), (math.pi / 2, [0, -1, 0])])
def test_edge_features_moving_object(yaw, expected):
    moving = ObjectState(np.array([0, 0, 1.0]), linear_velocity=np.array([1.0, 0, 0]))
    feats = edge_features(step_with([("right_hand", "seat", 1)]), bench(True, moving), hand_at([1, 0, 1], yaw))
    assert feats[0].rel_velocity == pytest.approx(expected, abs=1e-12)


def test_feature_order_follows_edges():
    edges = [("right_hand", "seat", 0), ("left_foot", "seat", 2), ("pelvis", "seat", 3), ("head", "seat", 1)]
    g = encode_goal(step_with(edges), bench(), posed_agent(), (np.zeros(3), None))
    codes = [int(np.argmax(row[6:])) for row in g.rmd_block]
    assert codes == [0, 2, 3, 1]


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_goal_dimension(n):
    parts = ["right_hand", "left_hand", "pelvis", "head", "left_foot"][:n]
    g = encode_goal(step_with([(p, "seat", k % 4) for k, p in enumerate(parts)]), bench(), posed_agent(), (np.zeros(3), None))
    assert len(g) == len(g.as_vector()) == goal_dim(n) == 10 * n + 120
    assert len(goal_slot_names(n)) == goal_dim(n)
    assert np.all(g.rmd_block[:, 6:].sum(axis=1) == 1.0)


def test_destination_zero_at_target():
    a = posed_agent()
    g = encode_goal(step_with([("right_hand", "seat", 3)]), bench(), a, (a.root_position.copy(), None))
    assert np.array_equal(g.destination, np.zeros(6))


def test_focus_prefers_movable_contact():
    carry = load_plan(plan_path("carry.json"))
    scene = load_scene_file(scene_path("box_table.json"))
    assert [focus_object(s, scene) for s in carry.steps][:2] == ["box", "box"]


def test_proprioception_layout():
    a = posed_agent((3, -2), yaw=0.4)
    p = encode_proprioception(a)
    assert len(p) == PROPRIO_DIM == 223
    assert p[0] == pytest.approx(a.root_position[2])
    assert np.all(p[91:181] == 0)  # linear and angular velocity blocks


def test_proprioception_translation_invariant(rng):
    a = random_agent(rng)
    shifted = AgentState(a.positions + [4.0, -7.5, 0.0], a.rotations, a.linear_velocities, a.angular_velocities)
    assert encode_proprioception(shifted) == pytest.approx(encode_proprioception(a), abs=1e-9)


INVARIANCE_CASES = [
    ("sit.json", "couch_box.json"),
    ("carry.json", "box_table.json"),
    ("door.json", "door.json"),
]


def invariance_error(plan_name, scene_name, rng) -> float:
    plan = load_plan(plan_path(plan_name))
    scene = load_scene_file(scene_path(scene_name))
    s_idx = int(rng.integers(len(plan.steps)))
    step = plan.steps[s_idx]
    states = random_states(scene, rng)
    tg = stage_targets(plan, s_idx + 1, scene, states)
    targets = (tg.human, tg.object)
    agent = random_agent(rng, near=scene.objects[0].state.position[:2])
    yaw = rng.uniform(-math.pi, math.pi)
    shift = rng.uniform(-20, 20, 2)
    g0 = encode_goal(step, scene, agent, targets, states)
    moved = transform(scene, states, agent, targets, yaw, shift)
    g1 = encode_goal(step, moved[0], moved[2], moved[3], moved[1])
    diffs = [
        np.max(np.abs(g0.rmd_block - g1.rmd_block)),
        np.max(np.abs(g0.destination - g1.destination)),
        np.max(np.abs(g0.object_block - g1.object_block)),
        np.max(np.abs(encode_proprioception(agent) - encode_proprioception(moved[2]))),
    ]
    return float(max(diffs))


@pytest.mark.parametrize("case", INVARIANCE_CASES)
def test_frame_invariance(case, rng):
    for _ in range(40):
        assert invariance_error(*case, rng) < 1e-6
