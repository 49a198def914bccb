from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import plan_path, scene_path
from rmdkit.executor import stage_targets
from rmdkit.plan import EdgeSpec, InteractionStep, MovementDynamic, Relation, RmdGraphSpec, TargetSpec, load_plan
from rmdkit.scene import load_scene_file
from rmdkit.sim import (
    MAX_LINEAR_SPEED,
    Command,
    ScriptedController,
    SimulationError,
    StageTargets,
    World,
    hinge_angle,
    initial_world,
    posed_agent,
    step,
    update_attachments,
)

DT = 1.0 / 30.0


@pytest.fixture
def box_scene():
    return load_scene_file(scene_path("box_table.json"))


def holding_step(part="box.top", hand="right_hand", dynamic=MovementDynamic.STATIONARY, obj=("table", Relation.UP)):
    return InteractionStep(
        "hold",
        TargetSpec("box", Relation.BACK),
        TargetSpec(*obj) if obj else None,
        RmdGraphSpec((EdgeSpec(hand, part, dynamic),)),
    )


def agent_with(body: int, xyz, base=None):
    a = base or posed_agent()
    pos = a.positions.copy()
    pos[body] = xyz
    return type(a).at_rest(pos, a.rotations)


def test_zero_command_is_fixed_point(box_scene):
    w = initial_world(box_scene, posed_agent((1, 2), 0.3))
    nxt = step(w, Command(), box_scene, DT)
    assert np.array_equal(nxt.agent.positions, w.agent.positions)
    assert np.array_equal(nxt.agent.rotations, w.agent.rotations)
    assert not nxt.agent.linear_velocities.any() and not nxt.agent.angular_velocities.any()
    assert nxt.time == pytest.approx(DT) and nxt.frame == 1


def test_root_speed_clamp(box_scene):
    w = initial_world(box_scene, posed_agent())
    root = w.agent.root_position
    nxt = step(w, Command({"pelvis": root + [1.0, 0, 0]}), box_scene, DT)
    assert nxt.agent.root_position[0] - root[0] == pytest.approx(MAX_LINEAR_SPEED * DT, abs=1e-12)
    assert nxt.agent.linear_velocities[0] == pytest.approx([2.0, 0, 0], abs=1e-9)


def test_angular_speed_clamp(box_scene):
    w = initial_world(box_scene, posed_agent())
    target = np.array([0, 0, math.sin(1.0), math.cos(1.0)])  # 2 rad about z
    nxt = step(w, Command(rotations={"head": target}), box_scene, DT)
    assert np.linalg.norm(nxt.agent.angular_velocities[2]) == pytest.approx(4.0, abs=1e-9)


def test_unknown_body(box_scene):
    w = initial_world(box_scene, posed_agent())
    with pytest.raises(SimulationError, match="tail"):
        step(w, Command({"tail": np.zeros(3)}), box_scene, DT)


def test_rigid_attachment_follows_hand(box_scene):
    top = box_scene.objects_by_name["box"].state.position + [0, 0, 0.15]
    w = initial_world(box_scene, agent_with(8, top))
    w = update_attachments(w, holding_step(), box_scene)
    assert "box" in w.attachments
    before = w.objects["box"].position.copy()
    nxt = step(w, Command({"right_hand": top + [0.1, 0, 0]}), box_scene, 0.1)
    assert nxt.objects["box"].position - before == pytest.approx([0.1, 0, 0], abs=1e-12)
    assert nxt.objects["box"].linear_velocity == pytest.approx([1.0, 0, 0], abs=1e-9)


def test_attachment_needs_contact_and_stationary_edge(box_scene):
    top = box_scene.objects_by_name["box"].state.position + [0, 0, 0.15]
    far = initial_world(box_scene, agent_with(8, top + [0.3, 0, 0]))
    assert update_attachments(far, holding_step(), box_scene).attachments == {}
    near = initial_world(box_scene, agent_with(8, top))
    approach = holding_step(dynamic=MovementDynamic.APPROACH)
    assert update_attachments(near, approach, box_scene).attachments == {}


def test_attachment_dropped_when_edge_leaves(box_scene):
    top = box_scene.objects_by_name["box"].state.position + [0, 0, 0.15]
    w = update_attachments(initial_world(box_scene, agent_with(8, top)), holding_step(), box_scene)
    released = update_attachments(w, holding_step(dynamic=MovementDynamic.LEAVE), box_scene)
    assert released.attachments == {}
    nxt = step(released, Command({"right_hand": top + [0.05, 0, 0]}), box_scene, DT)
    assert np.array_equal(nxt.objects["box"].position, w.objects["box"].position)


def test_static_objects_never_attach(box_scene):
    table_top = box_scene.objects_by_name["table"].state.position + [0, 0, 0.375]
    w = initial_world(box_scene, agent_with(8, table_top))
    w = update_attachments(w, holding_step(part="table.top"), box_scene)
    assert w.attachments == {}


def test_hinge_stays_within_limits():
    scene = load_scene_file(scene_path("door.json"))
    door = scene.objects_by_name["door"]
    handle = door.state.position + door.state.matrix @ door.part("handle").points[0]
    s = holding_step(part="door.handle", obj=("wall", Relation.LEFT))
    w = update_attachments(initial_world(scene, agent_with(8, handle)), s, scene)
    assert "door" in w.attachments
    for _ in range(60):  # drag the hand far in both directions
        w = step(w, Command({"right_hand": w.agent.positions[8] + [0.06, 0.06, 0]}), scene, DT)
        lo, hi = door.hinge.limits
        assert lo - 1e-9 <= hinge_angle(door, w.objects["door"]) <= hi + 1e-9
    assert np.array_equal(w.objects["wall"].position, scene.objects_by_name["wall"].state.position)


def test_controller_fixed_point(box_scene):
    agent = posed_agent()
    free = InteractionStep(
        "idle", TargetSpec("box", Relation.CENTER), None, RmdGraphSpec((EdgeSpec("left_hand", "box.top", MovementDynamic.FREE),))
    )
    ctrl = ScriptedController(box_scene)
    cmd = ctrl(free, StageTargets(agent.root_position.copy(), None, "box"), initial_world(box_scene, agent))
    assert cmd.is_zero()


def test_controller_approach_moves_toward_point(box_scene):
    box = box_scene.objects_by_name["box"].state.position
    agent = posed_agent((box[0] - 0.8, box[1]))
    s = holding_step(part="box.top", dynamic=MovementDynamic.APPROACH)
    w = initial_world(box_scene, agent)
    cmd = ScriptedController(box_scene)(s, StageTargets(agent.root_position.copy(), None, "box"), w)
    hand = agent.positions[8]
    to_point = box + [0, 0, 0.15] - hand
    assert np.dot(cmd.positions["right_hand"] - hand, to_point) > 0


def test_controller_is_deterministic():
    plan = load_plan(plan_path("sit.json"))
    scene = load_scene_file(scene_path("couch_box.json"))
    tg = stage_targets(plan, 1, scene, scene.initial_states())
    w = World(posed_agent(), scene.initial_states())
    a = ScriptedController(scene)(plan.steps[0], tg, w)
    b = ScriptedController(scene)(plan.steps[0], tg, w)
    assert a.positions.keys() == b.positions.keys()
    assert all(np.array_equal(a.positions[k], b.positions[k]) for k in a.positions)
