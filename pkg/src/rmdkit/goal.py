"""Goal-state and proprioception encoders.

All goal features are expressed in the agent-centric frame: origin at the
root's ground projection, x axis along the root heading.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .geometry import heading_of, matrix_to_euler, quat_to_matrix, tan_norm, yaw_matrix
from .plan import InteractionStep, MovementDynamic, resolve_edge_object
from .scene import (
    HEIGHTMAP_SIZE,
    N_BODIES,
    AgentState,
    ObjectState,
    Scene,
    nearest_surface_point,
    sample_heightmap,
    surface_point_velocity,
)

EDGE_DIM = 10
DEST_DIM = 6
HEIGHTMAP_DIM = HEIGHTMAP_SIZE * HEIGHTMAP_SIZE
OBJECT_DIM = 33
FIXED_DIM = DEST_DIM + HEIGHTMAP_DIM + OBJECT_DIM
PROPRIO_DIM = 1 + 6 * N_BODIES + 3 * N_BODIES + 3 * N_BODIES + 3 * (N_BODIES - 1)

_BOX_SIGNS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))


@dataclass(frozen=True)
class AgentFrame:
    origin: np.ndarray
    yaw: float

    @property
    def rotation(self) -> np.ndarray:
        return yaw_matrix(self.yaw)


@dataclass(frozen=True)
class EdgeFeature:
    rel_position: np.ndarray
    rel_velocity: np.ndarray
    dynamic_onehot: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.rel_position, self.rel_velocity, self.dynamic_onehot])


@dataclass(frozen=True)
class GoalState:
    rmd_block: np.ndarray  # (|E|, 10)
    destination: np.ndarray  # (6,)
    heightmap: np.ndarray  # (81,)
    object_block: np.ndarray  # (33,)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rmd_block.ravel(), self.destination, self.heightmap, self.object_block])

    def __len__(self) -> int:
        return self.rmd_block.size + FIXED_DIM


def goal_dim(n_edges: int) -> int:
    return EDGE_DIM * n_edges + FIXED_DIM


def goal_slot_names(n_edges: int) -> list[str]:
    names = []
    for k in range(n_edges):
        names += [f"e{k}_p{a}" for a in "xyz"] + [f"e{k}_v{a}" for a in "xyz"] + [f"e{k}_w{c}" for c in range(4)]
    names += [f"dh_{a}" for a in "xyz"] + [f"do_{a}" for a in "xyz"]
    names += [f"h_{r}_{c}" for r in range(HEIGHTMAP_SIZE) for c in range(HEIGHTMAP_SIZE)]
    names += [f"box{v}_{a}" for v in range(8) for a in "xyz"]
    names += [f"theta_{a}" for a in "xyz"] + [f"ov_{a}" for a in "xyz"] + [f"ow_{a}" for a in "xyz"]
    return names


def agent_frame(agent: AgentState, prev_yaw: float | None = None) -> AgentFrame:
    root = agent.root_position
    return AgentFrame(np.array([root[0], root[1], 0.0]), heading_of(agent.root_rotation, prev_yaw))


def to_agent_frame(v, frame: AgentFrame, kind: str = "point") -> np.ndarray:
    """Express a world point or direction in the agent frame (row vectors allowed)."""
    v = np.asarray(v, dtype=float)
    if kind == "point":
        v = v - frame.origin
    elif kind != "direction":
        raise ValueError(f"kind must be 'point' or 'direction', not {kind!r}")
    return v @ frame.rotation  # row-vector form of R^T v


def from_agent_frame(v, frame: AgentFrame, kind: str = "point") -> np.ndarray:
    w = np.asarray(v, dtype=float) @ frame.rotation.T
    return w + frame.origin if kind == "point" else w


def onehot(dynamic: MovementDynamic) -> np.ndarray:
    out = np.zeros(4)
    out[int(dynamic)] = 1.0
    return out


def edge_world_quantities(step, scene, agent, states=None):
    """Per edge: (human pos, human vel, object point, object point vel)."""
    out = []
    for e in step.graph.edges:
        resolved = resolve_edge_object(step, e, scene)
        if resolved is None:
            raise KeyError(f"cannot resolve object part '{e.object_part}'")
        obj_name, part_name = resolved
        pose = scene.state_of(obj_name, states)
        hp, hv = agent.body(e.human_part)
        op, _ = nearest_surface_point(scene.objects_by_name[obj_name].part(part_name), pose, hp)
        ov = surface_point_velocity(pose, op)
        out.append((hp, hv, op, ov))
    return out


def edge_features(
    step: InteractionStep,
    scene: Scene,
    agent: AgentState,
    states: dict[str, ObjectState] | None = None,
    frame: AgentFrame | None = None,
) -> list[EdgeFeature]:
    frame = frame or agent_frame(agent)
    feats = []
    for e, (hp, hv, op, ov) in zip(step.graph.edges, edge_world_quantities(step, scene, agent, states)):
        feats.append(
            EdgeFeature(
                to_agent_frame(op - hp, frame, "direction"),
                to_agent_frame(ov - hv, frame, "direction"),
                onehot(e.dynamic),
            )
        )
    return feats


def focus_object(step: InteractionStep, scene: Scene) -> str:
    """Object the step manipulates.

    The first movable object on a non-free edge wins; otherwise the object
    target's reference object, then the first edge's object. The object
    target names a place (``table(up)``), so it is not necessarily the
    object being moved.
    """
    resolved = [resolve_edge_object(step, e, scene) for e in step.graph.edges]
    for e, r in zip(step.graph.edges, resolved):
        if r is not None and e.dynamic != MovementDynamic.FREE and scene.objects_by_name[r[0]].movable:
            return r[0]
    if step.object_target is not None and step.object_target.object_name in scene.objects_by_name:
        return step.object_target.object_name
    for r in resolved:
        if r is not None:
            return r[0]
    if step.human_target.object_name in scene.objects_by_name:
        return step.human_target.object_name
    return scene.objects[0].name


def box_vertices(scene: Scene, name: str, states=None) -> np.ndarray:
    obj = scene.objects_by_name[name]
    st = scene.state_of(name, states)
    return (_BOX_SIGNS * obj.aabb.half_extents) @ st.matrix.T + st.position


def object_block(scene: Scene, name: str, frame: AgentFrame, states=None) -> np.ndarray:
    st = scene.state_of(name, states)
    verts = to_agent_frame(box_vertices(scene, name, states), frame, "point")
    theta = matrix_to_euler(frame.rotation.T @ st.matrix)
    return np.concatenate(
        [
            verts.ravel(),
            theta,
            to_agent_frame(st.linear_velocity, frame, "direction"),
            to_agent_frame(st.angular_velocity, frame, "direction"),
        ]
    )


def encode_goal(
    step: InteractionStep,
    scene: Scene,
    agent: AgentState,
    targets: tuple[np.ndarray, np.ndarray | None],
    states: dict[str, ObjectState] | None = None,
    frame: AgentFrame | None = None,
) -> GoalState:
    """Build the goal vector for ``step``.

    ``targets`` holds the world-frame human and object root destinations; a
    missing object destination defaults to the focus object's current root.
    """
    frame = frame or agent_frame(agent)
    focus = focus_object(step, scene)
    d_h, d_o = targets
    obj_root = scene.state_of(focus, states).position
    if d_o is None:
        d_o = obj_root
    feats = edge_features(step, scene, agent, states, frame)
    rmd = np.array([f.flat() for f in feats]).reshape(len(feats), EDGE_DIM)
    dest = np.concatenate(
        [
            to_agent_frame(np.asarray(d_h) - agent.root_position, frame, "direction"),
            to_agent_frame(np.asarray(d_o) - obj_root, frame, "direction"),
        ]
    )
    hmap = sample_heightmap(scene, agent, states, yaw=frame.yaw).ravel()
    return GoalState(rmd, dest, hmap, object_block(scene, focus, frame, states))


def encode_proprioception(agent: AgentState, frame: AgentFrame | None = None) -> np.ndarray:
    """223-dim body state: root height, then agent-frame rotations (tangent/normal),
    linear and angular velocities of all bodies, and non-root positions relative
    to the root."""
    frame = frame or agent_frame(agent)
    r_t = frame.rotation.T
    rots = np.concatenate([tan_norm(r_t @ quat_to_matrix(q)) for q in agent.rotations])
    lin = to_agent_frame(agent.linear_velocities, frame, "direction").ravel()
    ang = to_agent_frame(agent.angular_velocities, frame, "direction").ravel()
    rel = to_agent_frame(agent.positions[1:] - agent.root_position, frame, "direction").ravel()
    return np.concatenate([[agent.root_position[2]], rots, lin, ang, rel])
