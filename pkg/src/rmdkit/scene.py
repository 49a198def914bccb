"""Scene geometry: boxed objects with part point clouds, kinematic states,
target resolution and heightmap sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import IDENTITY_QUAT, euler_to_matrix, wrap_angle, yaw_matrix
from .plan import HUMAN_PARTS, Relation, TargetSpec

N_BODIES = len(HUMAN_PARTS)
BODY_INDEX = {name: i for i, name in enumerate(HUMAN_PARTS)}
PART_INFLATION = 0.05
TARGET_SCALE = 0.7

HEIGHTMAP_SIZE = 9
HEIGHTMAP_SPACING = 0.2


class SceneError(ValueError):
    def __init__(self, msg: str, path: str = ""):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


def _vec3(v, path: str = "") -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise SceneError(f"expected a 3-vector, got {v!r}", path)
    return a


@dataclass(frozen=True)
class Aabb:
    center: np.ndarray
    half_extents: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        object.__setattr__(self, "half_extents", _vec3(self.half_extents))
        if np.any(self.half_extents <= 0):
            raise SceneError("AABB half extents must be strictly positive")

    @property
    def size(self) -> np.ndarray:
        return 2.0 * self.half_extents


@dataclass(frozen=True)
class ObjectPart:
    name: str
    points: np.ndarray  # (n, 3), object-local frame

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise SceneError(f"part '{self.name}' has no points")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class ObjectState:
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        object.__setattr__(self, "rotation", wrap_angle(_vec3(self.rotation)))
        object.__setattr__(self, "linear_velocity", _vec3(self.linear_velocity))
        object.__setattr__(self, "angular_velocity", _vec3(self.angular_velocity))

    @property
    def matrix(self) -> np.ndarray:
        return euler_to_matrix(self.rotation)

    @property
    def yaw(self) -> float:
        m = self.matrix
        return math.atan2(m[1, 0], m[0, 0])


@dataclass(frozen=True)
class Hinge:
    """Revolute joint about a vertical axis through ``pivot`` (object-local)."""

    pivot: np.ndarray
    limits: tuple[float, float] = (-math.pi, math.pi)
    parent: str | None = None


@dataclass(frozen=True)
class SceneObject:
    name: str
    aabb: Aabb
    parts: tuple[ObjectPart, ...]
    movable: bool = False
    state: ObjectState | None = None
    hinge: Hinge | None = None

    def __post_init__(self):
        if self.state is None:
            object.__setattr__(
                self, "state", ObjectState(self.aabb.center.copy(), np.array([0.0, 0.0, self.aabb.yaw]))
            )
        names = [p.name for p in self.parts]
        if len(set(names)) != len(names):
            raise SceneError(f"duplicate part name in object '{self.name}'")
        lim = self.aabb.half_extents + PART_INFLATION
        for p in self.parts:
            if np.any(np.abs(p.points) > lim + 1e-12):
                raise SceneError(f"part '{p.name}' of '{self.name}' has points outside its AABB")

    def has_part(self, name: str) -> bool:
        return any(p.name == name for p in self.parts)

    def part(self, name: str) -> ObjectPart:
        for p in self.parts:
            if p.name == name:
                return p
        raise KeyError(f"object '{self.name}' has no part '{name}'")


@dataclass(frozen=True)
class AgentState:
    """Kinematic snapshot of the 15-body skeleton; body 0 is the pelvis/root."""

    positions: np.ndarray  # (15, 3) m
    rotations: np.ndarray  # (15, 4) unit quaternions, scalar-last
    linear_velocities: np.ndarray  # (15, 3) m/s
    angular_velocities: np.ndarray  # (15, 3) rad/s

    def __post_init__(self):
        for name, cols in (("positions", 3), ("rotations", 4), ("linear_velocities", 3), ("angular_velocities", 3)):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (N_BODIES, cols):
                raise ValueError(f"{name} must have shape ({N_BODIES}, {cols}), got {a.shape}")
            object.__setattr__(self, name, a)
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("body quaternions must be unit norm")

    @classmethod
    def at_rest(cls, positions, rotations=None) -> "AgentState":
        pos = np.asarray(positions, dtype=float)
        rot = np.tile(IDENTITY_QUAT, (N_BODIES, 1)) if rotations is None else rotations
        return cls(pos, rot, np.zeros((N_BODIES, 3)), np.zeros((N_BODIES, 3)))

    @property
    def root_position(self) -> np.ndarray:
        return self.positions[0]

    @property
    def root_rotation(self) -> np.ndarray:
        return self.rotations[0]

    def body(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        i = BODY_INDEX[name]
        return self.positions[i], self.linear_velocities[i]


@dataclass(frozen=True)
class HeightField:
    origin: np.ndarray  # world (x, y) of heights[0][0]
    spacing: float
    heights: np.ndarray  # rows along y, columns along x

    def sample(self, xy: np.ndarray) -> np.ndarray:
        rows, cols = self.heights.shape
        gx = np.clip((xy[:, 0] - self.origin[0]) / self.spacing, 0, cols - 1)
        gy = np.clip((xy[:, 1] - self.origin[1]) / self.spacing, 0, rows - 1)
        x0 = np.floor(gx).astype(int)
        y0 = np.floor(gy).astype(int)
        x1 = np.minimum(x0 + 1, cols - 1)
        y1 = np.minimum(y0 + 1, rows - 1)
        sx, sy = gx - x0, gy - y0
        h = self.heights
        top = h[y0, x0] * (1 - sx) + h[y0, x1] * sx
        bot = h[y1, x0] * (1 - sx) + h[y1, x1] * sx
        return top * (1 - sy) + bot * sy


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]
    ground: HeightField | None = None
    markers: dict[str, np.ndarray] = field(default_factory=dict)
    scene_id: str = ""

    def __post_init__(self):
        names = [o.name for o in self.objects]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise SceneError(f"duplicate object name '{dup[0]}'")
        clash = sorted(set(names) & set(self.markers))
        if clash:
            raise SceneError(f"marker name '{clash[0]}' collides with an object")
        object.__setattr__(self, "objects_by_name", {o.name: o for o in self.objects})

    def has_target(self, name: str) -> bool:
        return name in self.objects_by_name or name in self.markers

    def initial_states(self) -> dict[str, ObjectState]:
        return {o.name: o.state for o in self.objects}

    def state_of(self, name: str, states: dict[str, ObjectState] | None = None) -> ObjectState:
        if states is not None and name in states:
            return states[name]
        return self.objects_by_name[name].state

    def with_objects(self, objects) -> "Scene":
        return replace(self, objects=tuple(objects))


# --------------------------------------------------------------------------
# queries

_DISPLACEMENT = {
    Relation.CENTER: (0, 0),
    Relation.FORWARD: (0, 1.0),
    Relation.BACK: (0, -1.0),
    Relation.LEFT: (1, 1.0),
    Relation.RIGHT: (1, -1.0),
    Relation.UP: (2, 1.0),
    Relation.DOWN: (2, -1.0),
}


def relation_offset(relation: Relation, size: np.ndarray) -> np.ndarray:
    """Object-local displacement for a relation token, given full edge lengths."""
    axis, sign = _DISPLACEMENT[Relation(relation)]
    d = np.zeros(3)
    if relation != Relation.CENTER:
        d[axis] = sign * TARGET_SCALE * size[axis]
    return d


def resolve_target(spec: TargetSpec, scene: Scene, states: dict[str, ObjectState] | None = None) -> np.ndarray:
    """World-frame point for ``object(relation)``; markers resolve to themselves."""
    name = spec.object_name
    if name in scene.markers:
        return np.array(scene.markers[name], dtype=float)
    if name not in scene.objects_by_name:
        raise KeyError(f"unknown object: {name}")
    obj = scene.objects_by_name[name]
    st = scene.state_of(name, states)
    return st.position + yaw_matrix(st.yaw) @ relation_offset(spec.relation, obj.aabb.size)


def part_world_points(part: ObjectPart, pose: ObjectState) -> np.ndarray:
    return part.points @ pose.matrix.T + pose.position


def nearest_surface_point(part: ObjectPart, object_pose: ObjectState, query) -> tuple[np.ndarray, int]:
    pts = part_world_points(part, object_pose)
    d2 = np.sum((pts - np.asarray(query, dtype=float)) ** 2, axis=1)
    i = int(np.argmin(d2))
    return pts[i], i


def surface_point_velocity(object_state: ObjectState, point_world) -> np.ndarray:
    w = object_state.angular_velocity
    if not w.any():
        return object_state.linear_velocity.copy()
    r = np.asarray(point_world, dtype=float) - object_state.position
    return object_state.linear_velocity + np.cross(w, r)


def heightmap_lattice(root_xy, yaw: float) -> np.ndarray:
    """World (x, y) sample points, shape (9, 9, 2); column index runs forward."""
    ticks = (np.arange(HEIGHTMAP_SIZE) - HEIGHTMAP_SIZE // 2) * HEIGHTMAP_SPACING
    fx, ly = np.meshgrid(ticks, ticks)  # fx varies along columns, ly along rows
    c, s = math.cos(yaw), math.sin(yaw)
    wx = root_xy[0] + c * fx - s * ly
    wy = root_xy[1] + s * fx + c * ly
    return np.stack([wx, wy], axis=-1)


def sample_heightmap(
    scene: Scene,
    agent: AgentState,
    states: dict[str, ObjectState] | None = None,
    yaw: float | None = None,
) -> np.ndarray:
    """9x9 elevation grid under the root, aligned with the root heading."""
    if yaw is None:
        from .geometry import heading_of

        yaw = heading_of(agent.root_rotation)
    xy = heightmap_lattice(agent.root_position[:2], yaw).reshape(-1, 2)
    h = scene.ground.sample(xy) if scene.ground is not None else np.zeros(len(xy))
    for obj in scene.objects:
        st = scene.state_of(obj.name, states)
        oyaw = st.yaw
        c, s = math.cos(oyaw), math.sin(oyaw)
        dx = xy[:, 0] - st.position[0]
        dy = xy[:, 1] - st.position[1]
        lx = c * dx + s * dy
        ly = -s * dx + c * dy
        hx, hy, hz = obj.aabb.half_extents
        inside = (np.abs(lx) <= hx + 1e-9) & (np.abs(ly) <= hy + 1e-9)
        h = np.where(inside, np.maximum(h, st.position[2] + hz), h)
    return h.reshape(HEIGHTMAP_SIZE, HEIGHTMAP_SIZE)


# --------------------------------------------------------------------------
# loading / dumping


def _req(obj: dict, key: str, path: str):
    if not isinstance(obj, dict) or key not in obj:
        raise SceneError(f"missing field '{key}'", path)
    return obj[key]


def _parse_object(raw: dict, path: str) -> SceneObject:
    name = _req(raw, "name", path)
    box = _req(raw, "aabb", path)
    try:
        size = _vec3(_req(box, "size", f"{path}.aabb"), f"{path}.aabb.size")
        aabb = Aabb(_vec3(_req(box, "center", f"{path}.aabb"), f"{path}.aabb.center"), size / 2.0, float(box.get("yaw", 0.0)))
    except SceneError as exc:
        raise SceneError(str(exc), exc.path or f"{path}.aabb") from None
    parts = []
    for j, p in enumerate(_req(raw, "parts", path)):
        ppath = f"{path}.parts[{j}]"
        pname = _req(p, "name", ppath)
        pts = np.asarray(_req(p, "points", ppath), dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise SceneError(f"part '{pname}' needs a non-empty list of 3-vectors", ppath)
        if np.any(np.abs(pts) > aabb.half_extents + PART_INFLATION + 1e-12):
            raise SceneError(f"part '{pname}' has points outside the inflated AABB", ppath)
        parts.append(ObjectPart(pname, pts))
    init = raw.get("initial_state") or {}
    state = ObjectState(
        np.asarray(init.get("position", aabb.center), dtype=float),
        np.asarray(init.get("rotation", [0.0, 0.0, aabb.yaw]), dtype=float),
        np.asarray(init.get("linear_velocity", [0.0, 0.0, 0.0]), dtype=float),
        np.asarray(init.get("angular_velocity", [0.0, 0.0, 0.0]), dtype=float),
    )
    hinge = None
    if raw.get("hinge") is not None:
        h = raw["hinge"]
        lim = h.get("limits", [-math.pi, math.pi])
        hinge = Hinge(_vec3(_req(h, "pivot", f"{path}.hinge")), (float(lim[0]), float(lim[1])), h.get("parent"))
    try:
        return SceneObject(name, aabb, tuple(parts), bool(raw.get("movable", False)), state, hinge)
    except SceneError as exc:
        raise SceneError(str(exc), path) from None


def scene_from_dict(doc: dict, scene_id: str = "") -> Scene:
    if not isinstance(doc, dict):
        raise SceneError("scene document must be a JSON object")
    objects = [_parse_object(o, f"objects[{i}]") for i, o in enumerate(_req(doc, "objects", ""))]
    ground = None
    if doc.get("ground") is not None:
        g = doc["ground"]
        ground = HeightField(
            np.asarray(_req(g, "origin", "ground"), dtype=float)[:2],
            float(_req(g, "spacing", "ground")),
            np.asarray(_req(g, "heights", "ground"), dtype=float),
        )
    markers = {k: _vec3(v, f"markers.{k}") for k, v in (doc.get("markers") or {}).items()}
    return Scene(tuple(objects), ground, markers, doc.get("scene_id", scene_id))


def load_scene(document: str, scene_id: str = "") -> Scene:
    """Parse a scene document (JSON text)."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SceneError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scene_from_dict(doc, scene_id)


def load_scene_file(path) -> Scene:
    from pathlib import Path

    p = Path(path)
    return load_scene(p.read_text(encoding="utf-8"), scene_id=p.stem)


def _r(a) -> list[float]:
    # full precision: rounding can push an angle of pi past the wrap boundary
    return [float(x) for x in a]


def scene_to_dict(scene: Scene) -> dict:
    objs = []
    for o in scene.objects:
        d = {
            "name": o.name,
            "movable": o.movable,
            "aabb": {"center": _r(o.aabb.center), "size": _r(o.aabb.size), "yaw": float(o.aabb.yaw)},
            "parts": [{"name": p.name, "points": [_r(q) for q in p.points]} for p in o.parts],
            "initial_state": {
                "position": _r(o.state.position),
                "rotation": _r(o.state.rotation),
                "linear_velocity": _r(o.state.linear_velocity),
                "angular_velocity": _r(o.state.angular_velocity),
            },
        }
        if o.hinge is not None:
            d["hinge"] = {"pivot": _r(o.hinge.pivot), "limits": list(o.hinge.limits), "parent": o.hinge.parent}
        objs.append(d)
    doc: dict = {"scene_id": scene.scene_id, "objects": objs}
    if scene.markers:
        doc["markers"] = {k: _r(v) for k, v in scene.markers.items()}
    if scene.ground is not None:
        doc["ground"] = {
            "origin": _r(scene.ground.origin),
            "spacing": scene.ground.spacing,
            "heights": scene.ground.heights.tolist(),
        }
    return doc
