from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from rmdkit.plan import load_plan
from rmdkit.scene import load_scene_file

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")

DATA = Path(str(resources.files("rmdkit") / "data"))
SCENES = DATA / "scenes"
PLANS = DATA / "plans"

# (plan, scene) pairs for the scripted battery
FIXTURE_PAIRS = {
    "sit": ("sit.json", "couch_box.json"),
    "carry": ("carry.json", "box_table.json"),
    "door": ("door.json", "door.json"),
}


def plan_path(name: str) -> str:
    return str(PLANS / name)


def scene_path(name: str) -> str:
    return str(SCENES / name)


def fixture_pair(key: str) -> tuple[str, str]:
    p, s = FIXTURE_PAIRS[key]
    return plan_path(p), scene_path(s)


@pytest.fixture
def couch_scene():
    return load_scene_file(scene_path("couch_box.json"))


@pytest.fixture
def sit_plan():
    return load_plan(plan_path("sit.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_runs():
    """Fixed-layout episodes of the scripted battery, run once per session."""
    from rmdkit.executor import run_episode

    out = {}
    for key in FIXTURE_PAIRS:
        p, s = fixture_pair(key)
        plan, scene = load_plan(p), load_scene_file(s)
        out[key] = (plan, scene, run_episode(plan, scene))
    return out
