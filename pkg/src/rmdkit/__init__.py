"""Relative-movement-dynamics toolkit: interaction plans, goal encoding,
reward evaluation and a kinematic stage executor."""

from .plan import HUMAN_PARTS, MovementDynamic, Plan, Relation, parse_plan, serialize_plan, validate_plan
from .scene import AgentState, Scene, load_scene, load_scene_file

__all__ = [
    "HUMAN_PARTS",
    "AgentState",
    "MovementDynamic",
    "Plan",
    "Relation",
    "Scene",
    "load_scene",
    "load_scene_file",
    "parse_plan",
    "serialize_plan",
    "validate_plan",
]

__version__ = "0.1.0"
