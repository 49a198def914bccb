"""Seeded trials, batches and threshold sweeps over plan/scene fixtures."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .executor import EpisodeTrace, ExecutorConfig, run_episode
from .metrics import MetricsReport, TrialOutcome, aggregate, evaluate_trial
from .placement import Placement, apply_placement, placement_for_seed
from .plan import Plan, load_plan, validate_plan
from .scene import Scene, load_scene_file

logger = logging.getLogger(__name__)


class ValidationFailure(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class TrialSpec:
    index: int
    plan_path: str
    scene_path: str
    seed: int
    config: ExecutorConfig
    randomize: bool = True


@dataclass
class TrialResult:
    spec: TrialSpec
    outcome: TrialOutcome | None
    placement: Placement | None
    fault: str | None = None


def prepare(plan: Plan, scene: Scene, seed: int, randomize: bool = True) -> tuple[Scene, Placement | None]:
    """Validate, then apply the seeded placement."""
    violations = validate_plan(plan, scene)
    if violations:
        raise ValidationFailure(violations)
    if not randomize:
        return scene, None
    pl = placement_for_seed(seed)
    return apply_placement(scene, pl), pl


def run_seeded(
    plan: Plan, scene: Scene, seed: int, config: ExecutorConfig = ExecutorConfig(), randomize: bool = True
) -> tuple[EpisodeTrace, Scene, Placement | None]:
    placed, pl = prepare(plan, scene, seed, randomize)
    return run_episode(plan, placed, config), placed, pl


def run_trial(spec: TrialSpec, keep_trace: bool = False) -> TrialResult:
    """One isolated trial; every failure is captured as a fault."""
    try:
        plan = load_plan(spec.plan_path)
        scene = load_scene_file(spec.scene_path)
        trace, _, pl = run_seeded(plan, scene, spec.seed, spec.config, spec.randomize)
        if trace.error:
            return TrialResult(spec, None, pl, trace.error)
        outcome = evaluate_trial(trace, plan)
        if not keep_trace:
            outcome = replace(outcome, trace=None)
        return TrialResult(spec, outcome, pl)
    except Exception as exc:  # isolation: one bad trial never stops the batch
        logger.warning("trial %d faulted: %s", spec.index, exc)
        return TrialResult(spec, None, None, f"{type(exc).__name__}: {exc}")


def trial_specs(
    pairs: list[tuple[str, str]],
    n_trials: int,
    seed: int,
    config: ExecutorConfig,
    randomize: bool = True,
) -> list[TrialSpec]:
    """Trials go round-robin over (plan, scene) pairs; trial i uses seed + i."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if not pairs:
        raise ValueError("at least one plan is required")
    return [
        TrialSpec(i, pairs[i % len(pairs)][0], pairs[i % len(pairs)][1], seed + i, config, randomize)
        for i in range(n_trials)
    ]


def run_batch(specs: list[TrialSpec], jobs: int = 1) -> list[TrialResult]:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_trial, specs))
    return [run_trial(s) for s in specs]


def batch_report(results: list[TrialResult]) -> MetricsReport | None:
    outcomes = [r.outcome for r in results if r.outcome is not None]
    faults = sum(r.fault is not None for r in results)
    return aggregate(outcomes, n_faults=faults) if outcomes else None


def trials_csv(results: list[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["trial", "seed", "plan", "completed", "success", "substeps_completed", "substeps_total", "final_root_error_m", "fault"]
    )
    for r in results:
        o = r.outcome
        w.writerow(
            [
                r.spec.index,
                r.spec.seed,
                r.spec.plan_path,
                "" if o is None else int(o.completed),
                "" if o is None else int(o.interaction_success),
                "" if o is None else o.substeps_completed,
                "" if o is None else o.substeps_total,
                "" if o is None else f"{o.final_root_error:.6f}",
                r.fault or "",
            ]
        )
    return buf.getvalue()


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    report: MetricsReport | None


def threshold_sweep(
    pairs: list[tuple[str, str]],
    thresholds: list[float],
    n_trials: int,
    seed: int = 0,
    base: ExecutorConfig = ExecutorConfig(),
    jobs: int = 1,
) -> list[SweepRow]:
    """The same seeded battery evaluated at each transition threshold."""
    rows = []
    for th in thresholds:
        specs = trial_specs(pairs, n_trials, seed, replace(base, transition_threshold=th))
        rows.append(SweepRow(th, batch_report(run_batch(specs, jobs))))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "completion_rate", "substep_completion_ratio", "success_rate", "n_trials", "n_faults"])
    for r in rows:
        rep = r.report
        if rep is None:
            w.writerow([r.threshold, "", "", "", 0, ""])
        else:
            w.writerow(
                [
                    r.threshold,
                    f"{rep.completion_rate:.4f}",
                    f"{rep.substep_completion_ratio:.4f}",
                    f"{rep.success_rate:.4f}",
                    rep.n_trials,
                    rep.n_faults,
                ]
            )
    return buf.getvalue()
