"""Prompt assembly for the plan generator and plan retrieval.

Plans come from a fixture store by default: a directory of
``{key}.request.txt`` / ``{key}.response.txt`` pairs keyed by scene id and a
hash of the instruction. Live mode posts the prompt (and an optional image)
to a generic HTTP endpoint, records the exchange in the store, then parses.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template

from .plan import HUMAN_PARTS, MovementDynamic, Plan, PlanError, Relation, parse_plan
from .scene import Scene

logger = logging.getLogger(__name__)

SECTION_NAMES = (
    "scene_context",
    "rmd_definition",
    "plan_instance",
    "idea_outline",
    "plan_rules",
    "reference_example",
)
DEFAULT_TIMEOUT_S = 60.0
URL_ENV = "RMD_VLM_URL"
KEY_ENV = "RMD_VLM_KEY"

_DYNAMICS_TEXT = {
    MovementDynamic.STATIONARY: "the two parts keep their distance (steady contact or hold)",
    MovementDynamic.APPROACH: "the human part moves toward the object part",
    MovementDynamic.LEAVE: "the human part moves away from the object part",
    MovementDynamic.FREE: "no constraint between the two parts",
}


class PlannerError(RuntimeError):
    pass


class TemplateMissingError(PlannerError):
    def __init__(self, section: str):
        super().__init__(f"missing prompt template section '{section}'")
        self.section = section


class FixtureMissingError(PlannerError):
    def __init__(self, key: str, store: Path):
        super().__init__(f"no recorded reply for key '{key}' in {store}")
        self.key = key


class TransportError(PlannerError):
    pass


def load_templates(directory: str | Path | None = None) -> dict[str, str]:
    """Read ``{section}.txt`` files; defaults to the packaged templates.
    Absent files are simply left out (``build_prompt`` reports them)."""
    out = {}
    if directory is None:
        root = resources.files("rmdkit") / "templates"
        for name in SECTION_NAMES:
            f = root / f"{name}.txt"
            if f.is_file():
                out[name] = f.read_text(encoding="utf-8")
        return out
    for name in SECTION_NAMES:
        p = Path(directory) / f"{name}.txt"
        if p.is_file():
            out[name] = p.read_text(encoding="utf-8")
    return out


def default_fixture_dir() -> Path:
    return Path(str(resources.files("rmdkit") / "data" / "planner"))


@dataclass(frozen=True)
class PromptBundle:
    sections: tuple[tuple[str, str], ...]
    instruction: str
    scene_id: str = ""
    image_ref: str | None = None

    def __post_init__(self):
        names = tuple(n for n, _ in self.sections)
        if names != SECTION_NAMES:
            raise ValueError(f"sections must be {SECTION_NAMES}, got {names}")
        for n, text in self.sections:
            if not text.strip():
                raise ValueError(f"section '{n}' is empty")

    def section(self, name: str) -> str:
        return dict(self.sections)[name]

    def render(self) -> str:
        return "".join(f"### {name}\n{text.rstrip()}\n\n" for name, text in self.sections)

    @property
    def key(self) -> str:
        return fixture_key(self.scene_id, self.instruction)


def fixture_key(scene_id: str, instruction: str) -> str:
    digest = hashlib.sha256(instruction.encode("utf-8")).hexdigest()[:12]
    return f"{scene_id or 'scene'}-{digest}"


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _scene_fields(scene: Scene, instruction: str) -> dict[str, str]:
    objects = []
    for o in scene.objects:
        size = "x".join(_fmt(v) for v in o.aabb.size)
        parts = ", ".join(p.name for p in o.parts)
        objects.append(f"- {o.name}: size {size}, {'movable' if o.movable else 'static'}, parts [{parts}]")
    markers = [f"- {k}" for k in sorted(scene.markers)] or ["- (none)"]
    return {
        "objects": "\n".join(objects),
        "markers": "\n".join(markers),
        "relations": ", ".join(r.value for r in Relation),
        "dynamics": "\n".join(f"- {d.token}: {_DYNAMICS_TEXT[d]}" for d in MovementDynamic),
        "human_parts": ", ".join(HUMAN_PARTS),
        "instruction": instruction,
    }


def build_prompt(
    instruction: str,
    scene: Scene,
    templates: dict[str, str] | None = None,
    image_ref: str | None = None,
) -> PromptBundle:
    """Fill every section template with the scene inventory and instruction."""
    templates = load_templates() if templates is None else templates
    fields = _scene_fields(scene, instruction)
    sections = []
    for name in SECTION_NAMES:
        if name not in templates or not templates[name].strip():
            raise TemplateMissingError(name)
        sections.append((name, Template(templates[name]).safe_substitute(fields)))
    return PromptBundle(tuple(sections), instruction, scene.scene_id, image_ref)


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    api_key: str | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S

    @classmethod
    def from_env(cls, timeout_s: float = DEFAULT_TIMEOUT_S) -> "EndpointConfig":
        url = os.environ.get(URL_ENV)
        if not url:
            raise PlannerError(f"{URL_ENV} is not set")
        return cls(url, os.environ.get(KEY_ENV), timeout_s)


@dataclass(frozen=True)
class PlannerResponse:
    raw_text: str
    plan: Plan | None
    provenance: str  # "fixture" or "live"
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.plan is not None


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def extract_plan_text(reply: str) -> str:
    """Strip a markdown code fence or surrounding prose around the JSON body."""
    m = _FENCE.search(reply)
    if m:
        return m.group(1)
    start, end = reply.find("{"), reply.rfind("}")
    if start != -1 and end > start:
        return reply[start : end + 1]
    return reply


def parse_reply(raw: str, provenance: str) -> PlannerResponse:
    try:
        return PlannerResponse(raw, parse_plan(extract_plan_text(raw)), provenance)
    except PlanError as exc:
        return PlannerResponse(raw, None, provenance, f"{type(exc).__name__}: {exc}")


def _live_reply(bundle: PromptBundle, endpoint: EndpointConfig) -> str:
    import httpx

    headers = {"Authorization": f"Bearer {endpoint.api_key}"} if endpoint.api_key else {}
    data = {"prompt": bundle.render()}
    last: Exception | None = None
    for attempt in range(2):  # one retry
        files = None
        fh = None
        try:
            if bundle.image_ref:
                fh = open(bundle.image_ref, "rb")
                files = {"image": (Path(bundle.image_ref).name, fh)}
            r = httpx.post(endpoint.url, data=data, files=files, headers=headers, timeout=endpoint.timeout_s)
            r.raise_for_status()
            return _reply_text(r.text)
        except (httpx.TimeoutException, httpx.TransportError, httpx.HTTPStatusError) as exc:
            logger.warning("planner request attempt %d failed: %s", attempt + 1, exc)
            last = exc
        finally:
            if fh is not None:
                fh.close()
    raise TransportError(f"planner endpoint failed after retry: {last}")


def _reply_text(body: str) -> str:
    """Accept either a bare text body or a chat-completion style JSON body."""
    try:
        doc = json.loads(body)
    except json.JSONDecodeError:
        return body
    if isinstance(doc, dict):
        try:
            return doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            pass
        for k in ("text", "content", "output"):
            if isinstance(doc.get(k), str):
                return doc[k]
    return body


def request_plan(
    bundle: PromptBundle,
    endpoint: EndpointConfig | None = None,
    fixture_dir: str | Path | None = None,
) -> PlannerResponse:
    """Replay a recorded reply, or query ``endpoint`` when one is given.

    A live reply is written to the store before it is parsed, so every live
    session can be replayed. Parse failures are returned with the raw text
    kept and ``error`` set.
    """
    store = Path(fixture_dir) if fixture_dir is not None else default_fixture_dir()
    key = bundle.key
    if endpoint is None:
        resp = store / f"{key}.response.txt"
        if not resp.is_file():
            raise FixtureMissingError(key, store)
        return parse_reply(resp.read_text(encoding="utf-8"), "fixture")
    raw = _live_reply(bundle, endpoint)
    store.mkdir(parents=True, exist_ok=True)
    (store / f"{key}.request.txt").write_text(bundle.render(), encoding="utf-8")
    (store / f"{key}.response.txt").write_text(raw, encoding="utf-8")
    return parse_reply(raw, "live")


def record_fixture(bundle: PromptBundle, reply: str, fixture_dir: str | Path) -> str:
    """Store a request/reply pair by hand; returns the key."""
    store = Path(fixture_dir)
    store.mkdir(parents=True, exist_ok=True)
    (store / f"{bundle.key}.request.txt").write_text(bundle.render(), encoding="utf-8")
    (store / f"{bundle.key}.response.txt").write_text(reply, encoding="utf-8")
    return bundle.key
