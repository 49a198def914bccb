"""Desk-scale kinematic world: a 15-body puppet, rigid attachments for
carried objects, hinge constraints for articulated ones, and a scripted
proportional controller that stands in for a learned policy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    angular_velocity,
    heading_of,
    matrix_to_euler,
    matrix_to_quat,
    quat_to_matrix,
    rotate_towards,
    wrap_angle,
    yaw_matrix,
    yaw_quat,
)
from .plan import HUMAN_PARTS, InteractionStep, MovementDynamic, resolve_edge_object
from .scene import (
    BODY_INDEX,
    N_BODIES,
    AgentState,
    ObjectState,
    Scene,
    SceneObject,
    nearest_surface_point,
)

MAX_LINEAR_SPEED = 2.0
MAX_ANGULAR_SPEED = 4.0
ATTACH_DISTANCE = 0.10
STAND_HEIGHT = 0.9

# root-relative body offsets (x forward, y left, z up)
STAND_POSE = np.array(
    [
        [0.0, 0.0, 0.0],  # pelvis
        [0.0, 0.0, 0.25],  # torso
        [0.0, 0.0, 0.6],  # head
        [0.0, 0.2, 0.4],  # left_upper_arm
        [0.0, -0.2, 0.4],
        [0.0, 0.22, 0.15],  # left_lower_arm
        [0.0, -0.22, 0.15],
        [0.03, 0.22, -0.08],  # left_hand
        [0.03, -0.22, -0.08],
        [0.0, 0.1, -0.2],  # left_thigh
        [0.0, -0.1, -0.2],
        [0.0, 0.1, -0.6],  # left_shin
        [0.0, -0.1, -0.6],
        [0.05, 0.1, -0.85],  # left_foot
        [0.05, -0.1, -0.85],
    ]
)
SIT_HEIGHT = 0.55
SIT_POSE = STAND_POSE.copy()
SIT_POSE[[BODY_INDEX["left_hand"], BODY_INDEX["right_hand"]]] = [[0.15, 0.25, -0.05], [0.15, -0.25, -0.05]]
SIT_POSE[[BODY_INDEX["left_thigh"], BODY_INDEX["right_thigh"]]] = [[0.2, 0.1, -0.02], [0.2, -0.1, -0.02]]
SIT_POSE[[BODY_INDEX["left_shin"], BODY_INDEX["right_shin"]]] = [[0.42, 0.1, -0.25], [0.42, -0.1, -0.25]]
SIT_POSE[[BODY_INDEX["left_foot"], BODY_INDEX["right_foot"]]] = [[0.47, 0.1, -0.5], [0.47, -0.1, -0.5]]


class SimulationError(RuntimeError):
    pass


def posture_offsets(root_height: float) -> np.ndarray:
    """Blend standing and sitting templates so the feet stay on the ground."""
    beta = float(np.clip((STAND_HEIGHT - root_height) / (STAND_HEIGHT - SIT_HEIGHT), 0.0, 1.0))
    return (1.0 - beta) * STAND_POSE + beta * SIT_POSE


def posed_agent(root_xy=(0.0, 0.0), yaw: float = 0.0, root_height: float = STAND_HEIGHT) -> AgentState:
    """Agent at rest in the blended template pose."""
    root = np.array([root_xy[0], root_xy[1], root_height])
    pos = root + posture_offsets(root_height) @ yaw_matrix(yaw).T
    return AgentState.at_rest(pos, np.tile(yaw_quat(yaw), (N_BODIES, 1)))


@dataclass(frozen=True)
class Attachment:
    body: int
    rel_position: np.ndarray  # object root in body frame (rigid) or grasp point in object frame (hinged)
    rel_rotation: np.ndarray  # body->object rotation (rigid only)


@dataclass(frozen=True)
class World:
    agent: AgentState
    objects: dict[str, ObjectState]
    attachments: dict[str, Attachment] = field(default_factory=dict)
    frame: int = 0
    time: float = 0.0


@dataclass(frozen=True)
class Command:
    """Per-body position / orientation targets; bodies not listed hold still."""

    positions: dict[str, np.ndarray] = field(default_factory=dict)
    rotations: dict[str, np.ndarray] = field(default_factory=dict)

    def is_zero(self) -> bool:
        return not self.positions and not self.rotations


def initial_world(scene: Scene, agent: AgentState) -> World:
    return World(agent, dict(scene.initial_states()))


# --------------------------------------------------------------------------
# hinge helpers


def _hinge_frame(obj: SceneObject):
    ref = obj.state  # closed pose
    yaw0 = ref.yaw
    pivot_w = ref.position + yaw_matrix(yaw0) @ obj.hinge.pivot
    return pivot_w, yaw0


def hinge_angle(obj: SceneObject, state: ObjectState) -> float:
    return wrap_angle(state.yaw - _hinge_frame(obj)[1])


def hinge_pose(obj: SceneObject, angle: float) -> tuple[np.ndarray, float]:
    pivot_w, yaw0 = _hinge_frame(obj)
    yaw = yaw0 + angle
    return pivot_w + yaw_matrix(yaw) @ (-obj.hinge.pivot), yaw


def hinge_angle_toward(obj: SceneObject, target) -> float:
    """Hinge angle (within limits) bringing the object root closest to ``target``."""
    pivot_w, yaw0 = _hinge_frame(obj)
    arm = -obj.hinge.pivot
    base = math.atan2(arm[1], arm[0])
    want = math.atan2(target[1] - pivot_w[1], target[0] - pivot_w[0])
    lo, hi = obj.hinge.limits
    return float(np.clip(wrap_angle(want - yaw0 - base), lo, hi))


def hinge_point(obj: SceneObject, angle: float, local_point) -> np.ndarray:
    pivot_w, yaw0 = _hinge_frame(obj)
    return pivot_w + yaw_matrix(yaw0 + angle) @ (np.asarray(local_point) - obj.hinge.pivot)


# --------------------------------------------------------------------------
# stepping


def _clamp(delta: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.linalg.norm(delta))
    return delta if n <= limit else delta * (limit / n)


def _object_velocity(prev: ObjectState, pos, rot_m, dt: float) -> ObjectState:
    q_prev = matrix_to_quat(prev.matrix)
    q_next = matrix_to_quat(rot_m)
    return ObjectState(pos, matrix_to_euler(rot_m), (pos - prev.position) / dt, angular_velocity(q_prev, q_next, dt))


def step(world: World, command: Command, scene: Scene, dt: float) -> World:
    """Advance one frame. Bodies move toward their targets at bounded speed;
    velocities are finite differences; attached objects follow their body."""
    agent = world.agent
    for name in list(command.positions) + list(command.rotations):
        if name not in BODY_INDEX:
            raise SimulationError(f"command for unknown body '{name}'")
    pos = agent.positions.copy()
    rot = agent.rotations.copy()
    for name, target in command.positions.items():
        i = BODY_INDEX[name]
        pos[i] = pos[i] + _clamp(np.asarray(target, dtype=float) - pos[i], MAX_LINEAR_SPEED * dt)
    for name, target in command.rotations.items():
        i = BODY_INDEX[name]
        rot[i] = rotate_towards(rot[i], target, MAX_ANGULAR_SPEED * dt)
    lin = (pos - agent.positions) / dt
    ang = np.zeros((N_BODIES, 3))
    for i in range(N_BODIES):
        if not np.array_equal(rot[i], agent.rotations[i]):
            ang[i] = angular_velocity(agent.rotations[i], rot[i], dt)
    new_agent = AgentState(pos, rot, lin, ang)

    objects = {}
    for name, st in world.objects.items():
        att = world.attachments.get(name)
        obj = scene.objects_by_name[name]
        if att is None:
            objects[name] = replace(st, linear_velocity=np.zeros(3), angular_velocity=np.zeros(3)) if (
                st.linear_velocity.any() or st.angular_velocity.any()
            ) else st
            continue
        b_pos = pos[att.body]
        if obj.hinge is not None:
            cur = hinge_angle(obj, st)
            pivot_w, yaw0 = _hinge_frame(obj)
            grasp = att.rel_position - obj.hinge.pivot
            want = math.atan2(b_pos[1] - pivot_w[1], b_pos[0] - pivot_w[0]) - yaw0 - math.atan2(grasp[1], grasp[0])
            lo, hi = obj.hinge.limits
            want = float(np.clip(wrap_angle(want), lo, hi))
            new = cur + float(np.clip(wrap_angle(want - cur), -MAX_ANGULAR_SPEED * dt, MAX_ANGULAR_SPEED * dt))
            center, yaw = hinge_pose(obj, new)
            objects[name] = _object_velocity(st, center, yaw_matrix(yaw), dt)
        else:
            b_m = quat_to_matrix(rot[att.body])
            center = b_pos + b_m @ att.rel_position
            objects[name] = _object_velocity(st, center, b_m @ att.rel_rotation, dt)
    return World(new_agent, objects, dict(world.attachments), world.frame + 1, world.time + dt)


def _stationary_hand_edges(step_: InteractionStep, scene: Scene):
    for e in step_.graph.edges:
        if e.dynamic != MovementDynamic.STATIONARY or not e.human_part.endswith("_hand"):
            continue
        resolved = resolve_edge_object(step_, e, scene)
        if resolved is not None:
            yield e, resolved


def update_attachments(world: World, step_: InteractionStep, scene: Scene) -> World:
    """Attach a movable object when a stationary-edge hand is within 10 cm of its
    part; drop attachments whose edge is absent from the current step."""
    held = {(BODY_INDEX[e.human_part], obj) for e, (obj, _) in _stationary_hand_edges(step_, scene)}
    atts = {name: a for name, a in world.attachments.items() if (a.body, name) in held}
    for e, (obj_name, part_name) in _stationary_hand_edges(step_, scene):
        obj = scene.objects_by_name[obj_name]
        if not obj.movable or obj_name in atts:
            continue
        st = world.objects[obj_name]
        hand_pos, _ = world.agent.body(e.human_part)
        point, _ = nearest_surface_point(obj.part(part_name), st, hand_pos)
        if np.linalg.norm(point - hand_pos) > ATTACH_DISTANCE:
            continue
        body = BODY_INDEX[e.human_part]
        if obj.hinge is not None:
            local = st.matrix.T @ (hand_pos - st.position)
            atts[obj_name] = Attachment(body, local, np.eye(3))
        else:
            b_m = quat_to_matrix(world.agent.rotations[body])
            atts[obj_name] = Attachment(body, b_m.T @ (st.position - hand_pos), b_m.T @ st.matrix)
    if atts == world.attachments:
        return world
    return replace(world, attachments=atts)


# --------------------------------------------------------------------------
# scripted controller


@dataclass(frozen=True)
class StageTargets:
    """Destinations frozen when a stage starts."""

    human: np.ndarray
    object: np.ndarray | None
    focus: str


@dataclass
class ScriptedController:
    """Proportional servo toward the stage goals.

    The root walks toward the human destination, limbs on approach edges reach
    for their nearest object point, stationary edges hold contact (and carry
    an attached object toward its destination), leave and free edges follow
    the posture template.
    """

    scene: Scene
    dt: float = 1.0 / 30.0
    root_gain: float = 3.0
    root_speed: float = 1.5
    limb_gain: float = 6.0
    limb_speed: float = 1.2
    object_gain: float = 3.0
    object_speed: float = 0.8
    hinge_speed: float = 1.0
    yaw_rate: float = 3.0
    reach: float = 0.9
    approach_lead: float = 0.5
    sit_radius: float = 0.6
    crouch_radius: float = 1.0
    grasp_stand: float = 0.35
    retry_after: int = 20
    retract_frames: int = 12
    _stage_key: object = field(default=None, init=False, repr=False)
    _still_frames: int = field(default=0, init=False, repr=False)
    _retract_left: int = field(default=0, init=False, repr=False)

    def _retracting(self, step_: InteractionStep, world: World) -> bool:
        """Track how long the agent has been at rest in this step.

        An approach edge only scores well while closing in, so a limb that
        settled on contact before the stage advanced is pulled back to the
        posture template and sent in again.
        """
        key = id(step_)
        if key != self._stage_key:
            self._stage_key, self._still_frames, self._retract_left = key, 0, 0
        if self._retract_left > 0:
            self._retract_left -= 1
            return True
        speed = float(np.max(np.linalg.norm(world.agent.linear_velocities, axis=1)))
        self._still_frames = self._still_frames + 1 if speed < 0.05 else 0
        if self._still_frames >= self.retry_after:
            self._still_frames = 0
            self._retract_left = self.retract_frames - 1
            return True
        return False

    def _nearest(self, world: World, step_: InteractionStep, e, query):
        obj_name, part_name = resolve_edge_object(step_, e, self.scene)
        obj = self.scene.objects_by_name[obj_name]
        p, _ = nearest_surface_point(obj.part(part_name), world.objects[obj_name], query)
        return obj_name, p

    def _pending_grasps(self, step_: InteractionStep, world: World) -> list[np.ndarray]:
        """Contact points of stationary hand edges whose movable object is not yet held."""
        out = []
        for e in step_.graph.edges:
            if e.dynamic != MovementDynamic.STATIONARY or not e.human_part.endswith("_hand"):
                continue
            obj_name, p = self._nearest(world, step_, e, world.agent.body(e.human_part)[0])
            if self.scene.objects_by_name[obj_name].movable and obj_name not in world.attachments:
                out.append(p)
        return out

    def _height_target(self, world, step_, planar_dist) -> tuple[float, bool]:
        agent = world.agent
        h = STAND_HEIGHT
        sitting = False
        for e in step_.graph.edges:
            if e.dynamic not in (MovementDynamic.APPROACH, MovementDynamic.STATIONARY):
                continue
            if e.human_part == "pelvis" and planar_dist < self.sit_radius:
                _, p = self._nearest(world, step_, e, agent.root_position)
                h = min(h, p[2] + 0.1)
                sitting = True
            elif e.human_part.endswith("_hand") and planar_dist < self.crouch_radius:
                _, p = self._nearest(world, step_, e, agent.body(e.human_part)[0])
                h = min(h, p[2] + 0.6)
        return float(np.clip(h, SIT_HEIGHT if not sitting else 0.3, STAND_HEIGHT)), sitting

    def __call__(self, step_: InteractionStep, targets: StageTargets, world: World) -> Command:
        dt = self.dt
        agent = world.agent
        root = agent.root_position
        retract = self._retracting(step_, world)
        yaw = heading_of(agent.root_rotation)

        err = targets.human[:2] - root[:2]
        pending = self._pending_grasps(step_, world)
        if pending:
            # stay next to an object that still has to be picked up
            c = np.mean(pending, axis=0)[:2] - root[:2]
            n = float(np.linalg.norm(c))
            err = c * (1.0 - self.grasp_stand / n) if n > self.grasp_stand else np.zeros(2)
        dist = float(np.linalg.norm(err))
        h_target, sitting = self._height_target(world, step_, dist)
        v_xy = _clamp(self.root_gain * err, self.root_speed)
        v_z = float(np.clip(self.root_gain * (h_target - root[2]), -self.root_speed, self.root_speed))
        new_root = root + np.array([v_xy[0], v_xy[1], v_z]) * dt

        focus_state = world.objects[targets.focus]
        active = any(e.dynamic != MovementDynamic.FREE for e in step_.graph.edges)
        if sitting:
            want_yaw = focus_state.yaw
        elif dist > 0.4:
            want_yaw = math.atan2(err[1], err[0])
        elif active:
            d = focus_state.position[:2] - root[:2]
            want_yaw = math.atan2(d[1], d[0]) if np.linalg.norm(d) > 1e-6 else yaw
        else:
            want_yaw = yaw
        new_yaw = yaw + float(np.clip(wrap_angle(want_yaw - yaw), -self.yaw_rate * dt, self.yaw_rate * dt))

        template = new_root + posture_offsets(new_root[2]) @ yaw_matrix(new_yaw).T
        goals = {i: template[i] for i in range(N_BODIES)}
        torso = template[BODY_INDEX["torso"]]

        def reach_limited(p, lead=None):
            off = p - torso
            if lead is not None:
                # approach limbs stay near the body so contact coincides with arrival
                off[:2] = _clamp(off[:2], lead)
            n = float(np.linalg.norm(off))
            return torso + off if n <= self.reach else torso + off * (self.reach / n)

        # attachment bodies first so that companion hands can copy their motion
        carried_delta = None
        edges = sorted(
            step_.graph.edges,
            key=lambda e: 0 if any(a.body == BODY_INDEX[e.human_part] for a in world.attachments.values()) else 1,
        )
        for e in edges:
            if e.human_part == "pelvis" or e.dynamic == MovementDynamic.FREE:
                continue
            if e.dynamic == MovementDynamic.LEAVE:
                if retract:
                    # wind up toward the object so the template pulls the limb away again
                    i = BODY_INDEX[e.human_part]
                    _, point = self._nearest(world, step_, e, agent.positions[i])
                    goal = reach_limited(point, self.approach_lead)
                    goals[i] = agent.positions[i] + _clamp(self.limb_gain * (goal - agent.positions[i]), self.limb_speed) * dt
                continue
            i = BODY_INDEX[e.human_part]
            cur = agent.positions[i]
            obj_name, point = self._nearest(world, step_, e, cur)
            obj = self.scene.objects_by_name[obj_name]
            att = world.attachments.get(obj_name)
            if e.dynamic == MovementDynamic.STATIONARY and att is not None:
                if att.body == i and targets.object is not None:
                    if obj.hinge is not None:
                        ang = hinge_angle(obj, world.objects[obj_name])
                        want = hinge_angle_toward(obj, targets.object)
                        nxt = ang + float(np.clip(want - ang, -self.hinge_speed * dt, self.hinge_speed * dt))
                        goal = hinge_point(obj, nxt, att.rel_position)
                    else:
                        d = _clamp(self.object_gain * (targets.object - world.objects[obj_name].position), self.object_speed)
                        goal = cur + d * dt
                    goal = reach_limited(goal)
                    carried_delta = goal - cur
                    goals[i] = goal
                elif carried_delta is not None:
                    goals[i] = cur + carried_delta
                else:
                    goals[i] = cur
                continue
            if e.dynamic == MovementDynamic.STATIONARY and not obj.movable:
                if np.linalg.norm(point - cur) <= ATTACH_DISTANCE:
                    goals[i] = cur
                    continue
            if retract and e.dynamic == MovementDynamic.APPROACH:
                continue
            lead = self.approach_lead if e.dynamic == MovementDynamic.APPROACH else None
            goal = reach_limited(point, lead)
            goals[i] = cur + _clamp(self.limb_gain * (goal - cur), self.limb_speed) * dt

        goals[0] = new_root
        q_target = yaw_quat(new_yaw)
        positions, rotations = {}, {}
        for i, name in enumerate(HUMAN_PARTS):
            if np.linalg.norm(goals[i] - agent.positions[i]) > 1e-12:
                positions[name] = goals[i]
            if abs(abs(float(np.dot(agent.rotations[i], q_target))) - 1.0) > 1e-12:
                rotations[name] = q_target
        return Command(positions, rotations)
