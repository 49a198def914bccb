"""Interaction plan document model, parser, serializer and validator.

A plan is an ordered list of interaction steps. Each step names a human root
target, an optional object root target, and a bipartite graph of
(human part, object part, movement dynamic) edges.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .scene import Scene

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

HUMAN_PARTS = (
    "pelvis",
    "torso",
    "head",
    "left_upper_arm",
    "right_upper_arm",
    "left_lower_arm",
    "right_lower_arm",
    "left_hand",
    "right_hand",
    "left_thigh",
    "right_thigh",
    "left_shin",
    "right_shin",
    "left_foot",
    "right_foot",
)


class MovementDynamic(enum.IntEnum):
    STATIONARY = 0
    APPROACH = 1
    LEAVE = 2
    FREE = 3

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def from_token(cls, token: str) -> "MovementDynamic":
        try:
            return cls[token.upper()]
        except (KeyError, AttributeError):
            raise ValueError(token) from None


class Relation(str, enum.Enum):
    CENTER = "center"
    FORWARD = "forward"
    BACK = "back"
    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"


class PlanError(ValueError):
    """Base class for plan document errors."""


class PlanSyntaxError(PlanError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {msg}")
        self.line = line
        self.column = column


class PlanSchemaError(PlanError):
    def __init__(self, msg: str, path: str = ""):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


class PlanDomainError(PlanSchemaError):
    """A token outside a closed vocabulary (relation, human part)."""


@dataclass(frozen=True)
class EdgeSpec:
    human_part: str
    object_part: str
    dynamic: MovementDynamic


@dataclass(frozen=True)
class RmdGraphSpec:
    edges: tuple[EdgeSpec, ...]

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)


@dataclass(frozen=True)
class TargetSpec:
    object_name: str
    relation: Relation

    def __str__(self) -> str:
        return f"{self.object_name}({self.relation.value})"


@dataclass(frozen=True)
class InteractionStep:
    label: str
    human_target: TargetSpec
    object_target: TargetSpec | None
    graph: RmdGraphSpec


@dataclass(frozen=True)
class Plan:
    steps: tuple[InteractionStep, ...]
    instruction: str = ""
    scene_id: str = ""

    def __post_init__(self):
        if not self.steps:
            raise PlanSchemaError("plan must contain at least one step", "steps")

    def __len__(self) -> int:
        return len(self.steps)


# --------------------------------------------------------------------------
# parsing


def _expect(obj: Any, kind: type, path: str):
    if not isinstance(obj, kind):
        raise PlanSchemaError(f"expected {kind.__name__}, got {type(obj).__name__}", path)
    return obj


def _field(obj: dict, key: str, kind: type, path: str):
    if key not in obj:
        raise PlanSchemaError(f"missing field '{key}'", path)
    return _expect(obj[key], kind, f"{path}.{key}" if path else key)


def _warn_extras(obj: dict, known: set[str], path: str) -> None:
    for key in sorted(set(obj) - known):
        logger.warning("ignoring unknown field %s", f"{path}.{key}" if path else key)


def _parse_target(obj: Any, path: str) -> TargetSpec:
    _expect(obj, dict, path)
    _warn_extras(obj, {"object", "relation"}, path)
    name = _field(obj, "object", str, path)
    rel = _field(obj, "relation", str, path)
    try:
        relation = Relation(rel)
    except ValueError:
        raise PlanDomainError(f"unknown relation token '{rel}'", f"{path}.relation") from None
    return TargetSpec(name, relation)


def _parse_edge(obj: Any, path: str) -> EdgeSpec:
    _expect(obj, dict, path)
    _warn_extras(obj, {"human_part", "object_part", "dynamic"}, path)
    human = _field(obj, "human_part", str, path)
    if human not in HUMAN_PARTS:
        raise PlanDomainError(f"unknown human part '{human}'", f"{path}.human_part")
    part = _field(obj, "object_part", str, path)
    tok = _field(obj, "dynamic", str, path)
    try:
        dyn = MovementDynamic.from_token(tok)
    except ValueError:
        raise PlanSchemaError(f"unknown dynamics token '{tok}'", f"{path}.dynamic") from None
    return EdgeSpec(human, part, dyn)


def _parse_step(obj: Any, path: str) -> InteractionStep:
    _expect(obj, dict, path)
    _warn_extras(obj, {"label", "human_target", "object_target", "edges"}, path)
    label = _field(obj, "label", str, path)
    human = _parse_target(obj.get("human_target"), f"{path}.human_target") if "human_target" in obj else None
    if human is None:
        raise PlanSchemaError("missing field 'human_target'", path)
    raw_obj = obj.get("object_target")
    target = None if raw_obj is None else _parse_target(raw_obj, f"{path}.object_target")
    edges = _field(obj, "edges", list, path)
    graph = RmdGraphSpec(tuple(_parse_edge(e, f"{path}.edges[{i}]") for i, e in enumerate(edges)))
    return InteractionStep(label, human, target, graph)


def plan_from_dict(doc: Any) -> Plan:
    _expect(doc, dict, "$")
    _warn_extras(doc, {"schema_version", "scene_id", "instruction", "steps"}, "")
    version = _field(doc, "schema_version", int, "")
    if version != SCHEMA_VERSION:
        raise PlanSchemaError(f"unsupported schema_version {version}", "schema_version")
    steps = _field(doc, "steps", list, "")
    if not steps:
        raise PlanSchemaError("plan must contain at least one step", "steps")
    return Plan(
        steps=tuple(_parse_step(s, f"steps[{i}]") for i, s in enumerate(steps)),
        instruction=_field(doc, "instruction", str, "") if "instruction" in doc else "",
        scene_id=_field(doc, "scene_id", str, "") if "scene_id" in doc else "",
    )


def parse_plan(document: str) -> Plan:
    """Parse a plan document (JSON text) into a :class:`Plan`.

    Raises :class:`PlanSyntaxError` for malformed JSON (with line/column),
    :class:`PlanSchemaError` for structural problems and unknown dynamics
    tokens, and :class:`PlanDomainError` for unknown relation or human-part
    tokens. Unknown extra fields are logged and ignored.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise PlanSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return plan_from_dict(doc)


def load_plan(path) -> Plan:
    with open(path, encoding="utf-8") as fh:
        return parse_plan(fh.read())


# --------------------------------------------------------------------------
# serialization


def _target_dict(t: TargetSpec | None):
    if t is None:
        return None
    return {"object": t.object_name, "relation": t.relation.value}


def plan_to_dict(plan: Plan) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scene_id": plan.scene_id,
        "instruction": plan.instruction,
        "steps": [
            {
                "label": s.label,
                "human_target": _target_dict(s.human_target),
                "object_target": _target_dict(s.object_target),
                "edges": [
                    {"human_part": e.human_part, "object_part": e.object_part, "dynamic": e.dynamic.token}
                    for e in s.graph.edges
                ],
            }
            for s in plan.steps
        ],
    }


def serialize_plan(plan: Plan) -> str:
    return json.dumps(plan_to_dict(plan), indent=2, ensure_ascii=False) + "\n"


# --------------------------------------------------------------------------
# validation


def split_part_token(token: str) -> tuple[str | None, str]:
    """``"door.handle"`` -> ``("door", "handle")``; bare names have no object."""
    if "." in token:
        obj, part = token.split(".", 1)
        return obj, part
    return None, token


def step_objects(step: InteractionStep) -> list[str]:
    """Objects a bare part token may resolve against, in lookup order."""
    names = []
    if step.object_target is not None:
        names.append(step.object_target.object_name)
    names.append(step.human_target.object_name)
    return list(dict.fromkeys(names))


def resolve_edge_object(step: InteractionStep, edge: EdgeSpec, scene: "Scene") -> tuple[str, str] | None:
    """Find ``(object_name, part_name)`` for an edge, or None if unresolvable."""
    obj_name, part = split_part_token(edge.object_part)
    if obj_name is not None:
        obj = scene.objects_by_name.get(obj_name)
        return (obj_name, part) if obj is not None and obj.has_part(part) else None
    for name in step_objects(step):
        obj = scene.objects_by_name.get(name)
        if obj is not None and obj.has_part(part):
            return name, part
    owners = [o.name for o in scene.objects if o.has_part(part)]
    if len(owners) == 1:
        return owners[0], part
    return None


def validate_plan(plan: Plan, scene: "Scene") -> list[str]:
    """Return every rule violation of ``plan`` against ``scene`` (empty = valid)."""
    out: list[str] = []
    for idx, step in enumerate(plan.steps, start=1):
        where = f"step {idx} ({step.label})"
        targets = [step.human_target] + ([step.object_target] if step.object_target else [])
        for t in targets:
            if not scene.has_target(t.object_name):
                out.append(f"unknown object: {t.object_name} [{where}]")
        if not step.graph.edges:
            out.append(f"empty graph [{where}]")
        seen = set()
        moves_object = False
        for e in step.graph.edges:
            key = (e.human_part, e.object_part)
            if key in seen:
                out.append(f"duplicate edge: {e.human_part}-{e.object_part} [{where}]")
            seen.add(key)
            resolved = resolve_edge_object(step, e, scene)
            if resolved is None:
                obj_name, _ = split_part_token(e.object_part)
                if obj_name is not None and obj_name not in scene.objects_by_name:
                    out.append(f"unknown object: {obj_name} [{where}]")
                else:
                    out.append(f"unknown part: {e.object_part} [{where}]")
                continue
            if e.dynamic != MovementDynamic.FREE and scene.objects_by_name[resolved[0]].movable:
                moves_object = True
        if moves_object and step.object_target is None:
            out.append(f"missing object_target for step acting on a movable object [{where}]")
    return out
