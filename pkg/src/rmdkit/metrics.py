"""Episode scoring: completion, sub-step ratios, interaction success and precision."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .executor import EpisodeTrace, FrameRecord, final_root_error
from .plan import InteractionStep, MovementDynamic, Plan
from .scene import AgentState

STAND_ROOT_RANGE = (0.8, 1.1)  # m
STAND_MAX_SPEED = 0.3  # m/s, every body
STAND_HEAD_CLEARANCE = 0.5  # m above the root
SUCCESS_RADIUS = 0.20  # m
DEFAULT_TRIALS = 64


def is_standing(agent: AgentState) -> bool:
    root_z = float(agent.root_position[2])
    head_z = float(agent.body("head")[0][2])
    speeds = np.linalg.norm(agent.linear_velocities, axis=1)
    return (
        STAND_ROOT_RANGE[0] <= root_z <= STAND_ROOT_RANGE[1]
        and bool(np.all(speeds < STAND_MAX_SPEED))
        and head_z - root_z >= STAND_HEAD_CLEARANCE
    )


def is_interaction_step(step: InteractionStep) -> bool:
    """Steps that make or hold contact (approach or stationary edges)."""
    return any(e.dynamic in (MovementDynamic.APPROACH, MovementDynamic.STATIONARY) for e in step.graph.edges)


def moves_object(step: InteractionStep, frame: FrameRecord) -> bool:
    """True when the step carries its focus object toward a destination."""
    return step.object_target is not None and frame.targets.object is not None and any(
        e.dynamic == MovementDynamic.STATIONARY for e in step.graph.edges
    )


def _first_contact_edge(step: InteractionStep) -> int | None:
    for k, e in enumerate(step.graph.edges):
        if e.dynamic != MovementDynamic.FREE:
            return k
    return None


def tracking_error(step: InteractionStep, frame: FrameRecord) -> float:
    """Object root to its destination for object-moving steps; otherwise the
    first contact edge's human part to its object point; otherwise the
    planar root-to-destination distance."""
    if moves_object(step, frame):
        return float(np.linalg.norm(frame.objects[frame.targets.focus].position - frame.targets.object))
    k = _first_contact_edge(step)
    if k is not None:
        return float(np.linalg.norm(frame.goal.rmd_block[k, :3]))
    return float(np.linalg.norm(frame.agent.root_position[:2] - frame.targets.human[:2]))


@dataclass
class TrialOutcome:
    trace: EpisodeTrace | None = field(repr=False)
    substeps_total: int
    substeps_completed: int
    completed: bool
    interaction_success: bool
    final_root_error: float
    tracking_errors: list[float]  # per frame of interaction sub-steps
    substep_errors: list[float]  # at the frame each completed sub-step fired

    def __post_init__(self):
        if not 0 <= self.substeps_completed <= self.substeps_total:
            raise ValueError("substeps_completed must lie in [0, substeps_total]")


def _stage_frames(trace: EpisodeTrace) -> dict[int, list[FrameRecord]]:
    """Frames grouped by stage; settle frames after completion stay with the last stage."""
    out: dict[int, list[FrameRecord]] = {}
    for f in trace.frames:
        out.setdefault(f.status.stage_index, []).append(f)
    return out


def _fire_frame(frames: list[FrameRecord]) -> FrameRecord:
    """Last frame evaluated before the stage advanced or the plan completed."""
    active = [f for f in frames if not f.status.completed]
    return active[-1] if active else frames[0]


def _interaction_success(plan: Plan, by_stage: dict[int, list[FrameRecord]]) -> bool:
    """Dynamic tasks: object root ends within 20 cm of its destination.
    Static tasks: the contact part comes within 20 cm of the object root."""
    moving = [i for i, s in enumerate(plan.steps, 1) if i in by_stage and moves_object(s, by_stage[i][-1])]
    if moving:
        i = moving[-1]
        return tracking_error(plan.steps[i - 1], by_stage[i][-1]) < SUCCESS_RADIUS
    for i, s in enumerate(plan.steps, 1):
        if not is_interaction_step(s) or i not in by_stage:
            continue
        e = s.graph.edges[_first_contact_edge(s)]
        best = math.inf
        for f in by_stage[i]:
            part = f.agent.body(e.human_part)[0]
            best = min(best, float(np.linalg.norm(part - f.objects[f.targets.focus].position)))
        return best < SUCCESS_RADIUS
    return False


def _interaction_errors(step: InteractionStep, frames: list[FrameRecord]) -> list[float]:
    """Tracking errors over the interacting part of a step: every frame while
    an object is carried, otherwise from first contact (within 20 cm) on."""
    errs = [tracking_error(step, f) for f in frames]
    if moves_object(step, frames[0]):
        return errs
    for k, e in enumerate(errs):
        if e < SUCCESS_RADIUS:
            return errs[k:]
    return []


def evaluate_trial(trace: EpisodeTrace, plan: Plan) -> TrialOutcome:
    if not trace.frames:
        raise ValueError("cannot evaluate an empty trace")
    n = len(plan.steps)
    done = trace.stages_completed(n)
    err = final_root_error(trace)
    by_stage = _stage_frames(trace)
    tracking = []
    substep = []
    for i, frames in sorted(by_stage.items()):
        s = plan.steps[i - 1]
        if is_interaction_step(s):
            tracking += _interaction_errors(s, frames)
        if i <= done:
            substep.append(tracking_error(s, _fire_frame(frames)))
    completed = trace.completed and is_standing(trace.frames[-1].agent) and err < SUCCESS_RADIUS
    return TrialOutcome(
        trace=trace,
        substeps_total=n,
        substeps_completed=done,
        completed=completed,
        interaction_success=_interaction_success(plan, by_stage),
        final_root_error=err,
        tracking_errors=tracking,
        substep_errors=substep,
    )


@dataclass(frozen=True)
class MetricsReport:
    completion_rate: float  # %
    substep_completion_ratio: float  # %
    substep_precision: float  # cm, NaN when no sub-step completed
    success_rate: float  # %
    precision: float  # cm, NaN when no trial succeeded
    n_trials: int
    n_faults: int = 0

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, float):
                out[k] = None if math.isnan(v) else round(v, 6)
            else:
                out[k] = v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        cols = [
            ("Completion (%)", self.completion_rate),
            ("Sub-step ratio (%)", self.substep_completion_ratio),
            ("Sub-step precision (cm)", self.substep_precision),
            ("Success (%)", self.success_rate),
            ("Precision (cm)", self.precision),
            ("Trials", self.n_trials),
            ("Faults", self.n_faults),
        ]
        cells = [("-" if isinstance(v, float) and math.isnan(v) else f"{v:.1f}" if isinstance(v, float) else str(v)) for _, v in cols]
        widths = [max(len(h), len(c)) for (h, _), c in zip(cols, cells)]
        head = "  ".join(h.rjust(w) for (h, _), w in zip(cols, widths))
        row = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
        return f"{head}\n{row}\n"


def _mean(xs) -> float:
    return float(np.mean(xs)) if len(xs) else math.nan


def aggregate(outcomes: list[TrialOutcome], n_faults: int = 0) -> MetricsReport:
    """Combine trials. Means over empty populations are NaN, never 0."""
    if not outcomes:
        raise ValueError("aggregate needs at least one trial outcome")
    n = len(outcomes)
    total = sum(o.substeps_total for o in outcomes)
    done = sum(o.substeps_completed for o in outcomes)
    sub_errs = [e for o in outcomes for e in o.substep_errors]
    ok = [o for o in outcomes if o.interaction_success]
    # per-trial mean first, then the mean over successful trials
    trial_precision = [_mean(o.tracking_errors) for o in ok if o.tracking_errors]
    return MetricsReport(
        completion_rate=100.0 * sum(o.completed for o in outcomes) / n,
        substep_completion_ratio=100.0 * done / total if total else math.nan,
        substep_precision=100.0 * _mean(sub_errs),
        success_rate=100.0 * len(ok) / n,
        precision=100.0 * _mean(trial_precision),
        n_trials=n,
        n_faults=n_faults,
    )
