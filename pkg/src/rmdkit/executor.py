"""Stage state machine and episode loop."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .goal import GoalState, agent_frame, edge_features, encode_goal, focus_object
from .plan import Plan
from .rewards import RewardBreakdown, RewardWeights, evaluate_rewards, zero_style
from .scene import AgentState, ObjectState, Scene, resolve_target
from .sim import ScriptedController, StageTargets, World, initial_world, posed_agent, step, update_attachments

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExecutorConfig:
    transition_threshold: float = 0.9
    max_episode_frames: int = 450
    dt: float = 1.0 / 30.0
    weighting_mode: str = "adaptive"
    settle_frames: int = 45

    def __post_init__(self):
        if not 0.0 < self.transition_threshold < 1.0:
            raise ValueError("transition_threshold must lie in (0, 1)")
        if self.max_episode_frames < 1:
            raise ValueError("max_episode_frames must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.weighting_mode not in ("uniform", "adaptive"):
            raise ValueError(f"unknown weighting mode {self.weighting_mode!r}")
        if self.settle_frames < 0:
            raise ValueError("settle_frames must be >= 0")


@dataclass(frozen=True)
class StageStatus:
    stage_index: int = 1
    completed: bool = False
    frames_in_stage: int = 0


def advance_check(r_task: float, status: StageStatus, plan: Plan, config: ExecutorConfig) -> StageStatus:
    """Stage status for the next frame given this frame's task reward."""
    if status.completed:
        return replace(status, frames_in_stage=status.frames_in_stage + 1)
    if r_task > config.transition_threshold:
        if status.stage_index < len(plan.steps):
            return StageStatus(status.stage_index + 1, False, 0)
        return StageStatus(status.stage_index, True, status.frames_in_stage + 1)
    return replace(status, frames_in_stage=status.frames_in_stage + 1)


@dataclass(frozen=True)
class FrameRecord:
    t: float
    agent: AgentState
    objects: dict[str, ObjectState]
    goal: GoalState
    reward: RewardBreakdown
    status: StageStatus  # stage in effect while this frame was evaluated
    targets: StageTargets


@dataclass
class EpisodeTrace:
    frames: list[FrameRecord] = field(default_factory=list)
    completed: bool = False
    error: str | None = None
    completed_frame: int | None = None

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def stage_indices(self) -> list[int]:
        return [f.status.stage_index for f in self.frames]

    def stages_completed(self, n_steps: int) -> int:
        if not self.frames:
            return 0
        last = self.frames[-1].status.stage_index
        return n_steps if self.completed else last - 1


Controller = Callable[..., object]


def stage_targets(plan: Plan, index: int, scene: Scene, objects: dict[str, ObjectState]) -> StageTargets:
    s = plan.steps[index - 1]
    d_h = resolve_target(s.human_target, scene, objects)
    d_o = None if s.object_target is None else resolve_target(s.object_target, scene, objects)
    return StageTargets(d_h, d_o, focus_object(s, scene))


def frame_goal(plan: Plan, index: int, scene: Scene, world: World, targets: StageTargets) -> GoalState:
    """Goal observation for stage ``index`` at ``world``."""
    s = plan.steps[index - 1]
    return encode_goal(s, scene, world.agent, (targets.human, targets.object), world.objects, agent_frame(world.agent))


def frame_rewards(
    plan: Plan,
    index: int,
    scene: Scene,
    world: World,
    targets: StageTargets,
    config: ExecutorConfig,
    weights: RewardWeights | None = None,
    style=zero_style,
) -> RewardBreakdown:
    """Reward breakdown for stage ``index`` at ``world``."""
    s = plan.steps[index - 1]
    feats = edge_features(s, scene, world.agent, world.objects, agent_frame(world.agent))
    return evaluate_rewards(
        feats,
        [e.dynamic for e in s.graph.edges],
        world.agent.root_position[:2],
        targets.human[:2],
        world.objects[targets.focus].position,
        targets.object,
        mode=config.weighting_mode,
        base=weights,
        r_style=style(world),
    )


def run_episode(
    plan: Plan,
    scene: Scene,
    config: ExecutorConfig = ExecutorConfig(),
    controller: Controller | None = None,
    agent: AgentState | None = None,
    weights: RewardWeights | None = None,
    style=zero_style,
) -> EpisodeTrace:
    """Run ``plan`` frame by frame until it completes or the frame budget ends.

    Each frame: encode the goal for the current stage, query the controller,
    step the world, score the transition, then apply the stage rule. After
    the final stage completes the controller keeps pursuing that stage for
    ``config.settle_frames`` more frames (still within the budget).
    """
    if controller is None:
        controller = ScriptedController(scene, dt=config.dt)
    world = initial_world(scene, agent if agent is not None else posed_agent())
    status = StageStatus()
    trace = EpisodeTrace()
    targets = stage_targets(plan, 1, scene, world.objects)
    settle_left = None
    for k in range(config.max_episode_frames):
        current = status.stage_index
        s = plan.steps[current - 1]
        try:
            world = update_attachments(world, s, scene)
            goal = frame_goal(plan, current, scene, world, targets)
            cmd = controller(s, targets, world)
            world = step(world, cmd, scene, config.dt)
            reward = frame_rewards(plan, current, scene, world, targets, config, weights, style)
        except Exception as exc:  # a fault truncates the trace
            logger.warning("episode fault at frame %d: %s", k, exc)
            trace.error = f"frame {k}: {type(exc).__name__}: {exc}"
            break
        trace.frames.append(FrameRecord(world.time, world.agent, dict(world.objects), goal, reward, status, targets))
        status = advance_check(reward.r_task, status, plan, config)
        if status.completed:
            if not trace.completed:
                trace.completed = True
                trace.completed_frame = k
                settle_left = config.settle_frames
            if settle_left <= 0:
                break
            settle_left -= 1
        elif status.stage_index != current:
            targets = stage_targets(plan, status.stage_index, scene, world.objects)
    return trace


# --------------------------------------------------------------------------
# trace files


def reward_columns(n_edges: int) -> list[str]:
    return ["t"] + [f"per_edge_{i}" for i in range(n_edges)] + [
        "r_RMD",
        "r_dh",
        "r_do",
        "r_task",
        "r_style",
        "r_total",
        "stage_index",
    ]


def trace_csv(trace: EpisodeTrace) -> str:
    """Reward trace as CSV; per-edge columns are padded to the widest stage."""
    width = max((len(f.reward.per_edge) for f in trace.frames), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(reward_columns(width))
    for f in trace.frames:
        r = f.reward
        edges = [f"{x:.9g}" for x in r.per_edge] + [""] * (width - len(r.per_edge))
        w.writerow(
            [f"{f.t:.6f}"]
            + edges
            + [f"{x:.9g}" for x in (r.r_rmd_total, r.r_dh, r.r_do, r.r_task, r.r_style, r.r_total)]
            + [f.status.stage_index]
        )
    return buf.getvalue()


def final_root_error(trace: EpisodeTrace) -> float | None:
    if not trace.frames:
        return None
    last = trace.frames[-1]
    return float(np.linalg.norm(last.agent.root_position[:2] - last.targets.human[:2]))


def trace_summary(trace: EpisodeTrace, plan: Plan) -> dict:
    err = final_root_error(trace)
    out = {
        "completed": trace.completed,
        "stages_completed": trace.stages_completed(len(plan.steps)),
        "frames": len(trace),
        "final_root_error_m": None if err is None else round(err, 6),
    }
    if trace.error:
        out["error"] = trace.error
    return out


def write_trace(trace: EpisodeTrace, plan: Plan, csv_path, summary_path) -> None:
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trace_csv(trace))
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(trace_summary(trace, plan), fh, indent=2, sort_keys=True)
        fh.write("\n")
