from __future__ import annotations

import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import plan_path, scene_path
from rmdkit.executor import ExecutorConfig, EpisodeTrace
from rmdkit.metrics import TrialOutcome, aggregate, evaluate_trial, is_standing
from rmdkit.plan import load_plan
from rmdkit.runner import batch_report, run_batch, trial_specs
from rmdkit.scene import AgentState
from rmdkit.sim import posed_agent


def outcome(completed=True, success=True, total=3, done=3, errs=(0.05,), sub=(0.1,)):
    return TrialOutcome(None, total, done, completed, success, 0.01, list(errs), list(sub))


def test_standing_detector():
    assert is_standing(posed_agent())
    assert not is_standing(posed_agent(root_height=0.45))
    a = posed_agent()
    vel = a.linear_velocities.copy()
    vel[8] = [1.0, 0, 0]
    assert not is_standing(AgentState(a.positions, a.rotations, vel, a.angular_velocities))


def test_completion_rate_half():
    r = aggregate([outcome(), outcome(), outcome(False), outcome(False)])
    assert r.completion_rate == 50.0 and r.n_trials == 4


def test_substep_ratio():
    r = aggregate([outcome(total=3, done=3), outcome(False, total=3, done=2)])
    assert r.substep_completion_ratio == pytest.approx(100 * 5 / 6)


def test_precision_absent_without_successes():
    r = aggregate([outcome(False, False, done=0, sub=()), outcome(False, False, done=1)])
    assert math.isnan(r.precision)
    assert r.to_dict()["precision"] is None
    assert json.loads(r.to_json())["precision"] is None
    assert "-" in r.to_table().splitlines()[1].split()


def test_precision_means_over_successful_trials_in_cm():
    r = aggregate([outcome(errs=(0.1, 0.3)), outcome(errs=(0.4,)), outcome(success=False, errs=(9.0,))])
    # per-trial means 0.2 and 0.4, failed trial ignored
    assert r.precision == pytest.approx(30.0)
    assert r.success_rate == pytest.approx(200 / 3)


def test_aggregate_needs_outcomes():
    with pytest.raises(ValueError):
        aggregate([])


def test_outcome_counter_invariant():
    with pytest.raises(ValueError):
        outcome(total=2, done=3)


outcomes = st.builds(
    outcome,
    st.booleans(),
    st.booleans(),
    st.just(3),
    st.integers(0, 3),
    st.lists(st.floats(0, 2), max_size=4),
    st.lists(st.floats(0, 2), max_size=3),
)


@given(st.lists(outcomes, min_size=1, max_size=8), st.randoms())
def test_aggregate_permutation_invariant(items, rnd):
    shuffled = list(items)
    rnd.shuffle(shuffled)
    a, b = aggregate(items).to_dict(), aggregate(shuffled).to_dict()
    for k in a:
        if isinstance(a[k], float):
            assert a[k] == pytest.approx(b[k], abs=1e-9)
        else:
            assert a[k] == b[k]


@given(st.lists(outcomes, min_size=1, max_size=8))
def test_report_ranges(items):
    r = aggregate(items)
    for pct in (r.completion_rate, r.substep_completion_ratio, r.success_rate):
        assert 0.0 <= pct <= 100.0
    for cm in (r.precision, r.substep_precision):
        assert math.isnan(cm) or cm >= 0


def test_table_layout():
    lines = aggregate([outcome()]).to_table().splitlines()
    assert len(lines) == 2 and len(lines[0]) == len(lines[1])
    assert "Completion (%)" in lines[0] and "Precision (cm)" in lines[0]


def test_evaluate_completed_fixture(fixture_runs):
    plan, _, trace = fixture_runs["sit"]
    o = evaluate_trial(trace, plan)
    assert o.completed and o.substeps_completed == o.substeps_total == 3
    assert o.final_root_error < 0.2 and len(o.substep_errors) == 3
    assert all(e >= 0 for e in o.tracking_errors)


def shift_finish(trace: EpisodeTrace, dx: float) -> EpisodeTrace:
    last = trace.frames[-1]
    moved = replace(last, targets=replace(last.targets, human=last.targets.human + [dx, 0, 0]))
    return EpisodeTrace(trace.frames[:-1] + [moved], trace.completed, trace.error, trace.completed_frame)


def test_far_from_finish_is_not_completed(fixture_runs):
    plan, _, trace = fixture_runs["carry"]
    base = evaluate_trial(trace, plan)
    far = evaluate_trial(shift_finish(trace, 0.25 + base.final_root_error), plan)
    assert base.completed and not far.completed
    assert far.final_root_error >= 0.25
    assert far.interaction_success == base.interaction_success


def test_partial_trace_counts_stages(fixture_runs):
    plan, _, trace = fixture_runs["sit"]
    cut = next(k for k, s in enumerate(trace.stage_indices) if s == 3)
    partial = EpisodeTrace(trace.frames[: cut + 1])
    o = evaluate_trial(partial, plan)
    assert o.substeps_completed == 2 and not o.completed


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        evaluate_trial(EpisodeTrace(), load_plan(plan_path("sit.json")))


def test_completion_implies_all_substeps(fixture_runs):
    for plan, _, trace in fixture_runs.values():
        o = evaluate_trial(trace, plan)
        assert not o.completed or o.substeps_completed == o.substeps_total


def test_success_at_least_completion_on_single_task_fixture():
    pair = (plan_path("place_box.json"), scene_path("box_table.json"))
    results = run_batch(trial_specs([pair], 3, 0, ExecutorConfig()))
    r = batch_report(results)
    assert r.n_faults == 0
    assert r.success_rate >= r.completion_rate
    assert all(res.outcome.completed <= res.outcome.interaction_success for res in results)
    assert np.isfinite(r.precision)
