"""Command-line entry point: ``rmd <command> ...``.

Exit codes: 0 success, 1 input parse or usage error, 2 validation failure,
3 runtime fault.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime
from importlib import resources
from pathlib import Path

from . import planner
from .executor import ExecutorConfig, frame_goal, stage_targets, trace_csv, trace_summary
from .goal import agent_frame, goal_slot_names
from .plan import PlanError, load_plan, serialize_plan, validate_plan
from .scene import SceneError, load_scene_file, scene_to_dict
from .sim import initial_world, posed_agent
from .runner import (
    ValidationFailure,
    batch_report,
    run_batch,
    run_seeded,
    sweep_csv,
    threshold_sweep,
    trial_specs,
    trials_csv,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INVALID = 2
EXIT_RUNTIME = 3

logger = logging.getLogger("rmdkit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def data_path(kind: str, value: str) -> str:
    """Accept a file path or the bare name of a bundled fixture (``couch_box``)."""
    p = Path(value)
    if p.exists():
        return str(p)
    bundled = resources.files("rmdkit") / "data" / kind / f"{value}.json"
    if bundled.is_file():
        return str(bundled)
    return value


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_dir(out: str, seed: int) -> Path:
    """Fresh per-run directory ``<timestamp>-seed<N>`` under ``out``."""
    base = Path(out)
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    d = base / f"{stamp}-seed{seed}"
    k = 1
    while d.exists():
        d = base / f"{stamp}-seed{seed}-{k}"
        k += 1
    d.mkdir(parents=True)
    return d


def _config(args) -> ExecutorConfig:
    try:
        return ExecutorConfig(
            transition_threshold=args.threshold,
            max_episode_frames=args.max_frames,
            weighting_mode=args.weighting,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _pairs(args) -> list[tuple[str, str]]:
    plans = [data_path("plans", p) for p in args.plan]
    scenes = [data_path("scenes", s) for s in args.scene]
    if len(scenes) == 1:
        scenes = scenes * len(plans)
    if len(scenes) != len(plans):
        raise UsageError("give one --scene, or one --scene per --plan")
    return list(zip(plans, scenes))


def _manifest(args, pairs, config: ExecutorConfig, extra: dict | None = None) -> dict:
    doc = {
        "plans": [p for p, _ in pairs],
        "scenes": [s for _, s in pairs],
        "seed": args.seed,
        "config": {
            "transition_threshold": config.transition_threshold,
            "max_episode_frames": config.max_episode_frames,
            "dt": config.dt,
            "weighting_mode": config.weighting_mode,
            "settle_frames": config.settle_frames,
        },
    }
    doc.update(extra or {})
    return doc


# --------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    plan = load_plan(data_path("plans", args.plan))
    scene = load_scene_file(data_path("scenes", args.scene))
    violations = validate_plan(plan, scene)
    for v in violations:
        print(v)
    if violations:
        return EXIT_INVALID
    print(f"ok: {len(plan.steps)} steps")
    return EXIT_OK


def cmd_encode(args) -> int:
    plan = load_plan(data_path("plans", args.plan))
    scene = load_scene_file(data_path("scenes", args.scene))
    violations = validate_plan(plan, scene)
    if violations:
        for v in violations:
            print(v)
        return EXIT_INVALID
    if not 1 <= args.step <= len(plan.steps):
        raise UsageError(f"--step must lie in [1, {len(plan.steps)}]")
    world = initial_world(scene, posed_agent())
    targets = stage_targets(plan, args.step, scene, world.objects)
    goal = frame_goal(plan, args.step, scene, world, targets)
    vec = goal.as_vector()
    names = goal_slot_names(goal.rmd_block.shape[0])
    doc = {
        "step": args.step,
        "label": plan.steps[args.step - 1].label,
        "dim": int(vec.size),
        "agent_yaw": round(agent_frame(world.agent).yaw, 9),
        "goal": {n: round(float(v), 9) for n, v in zip(names, vec)},
    }
    text = _dump(doc)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    config = _config(args)
    pairs = _pairs(args)
    if len(pairs) != 1:
        raise UsageError("run takes exactly one --plan")
    plan_path, scene_path = pairs[0]
    plan = load_plan(plan_path)
    scene = load_scene_file(scene_path)
    try:
        trace, placed, pl = run_seeded(plan, scene, args.seed, config, not args.no_randomize)
    except ValidationFailure as exc:
        for v in exc.violations:
            print(v)
        return EXIT_INVALID
    d = run_dir(args.out, args.seed)
    extra = {"placement": None if pl is None else pl.as_dict()}
    _write(d / "manifest.json", _dump(_manifest(args, pairs, config, extra)))
    _write(d / "scene.json", _dump(scene_to_dict(placed)))
    _write(d / "trace.csv", trace_csv(trace))
    summary = trace_summary(trace, plan)
    _write(d / "summary.json", _dump(summary))
    print(d)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_RUNTIME if trace.error else EXIT_OK


def cmd_batch(args) -> int:
    config = _config(args)
    pairs = _pairs(args)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    specs = trial_specs(pairs, args.trials, args.seed, config, not args.no_randomize)
    results = run_batch(specs, args.jobs)
    report = batch_report(results)
    d = run_dir(args.out, args.seed)
    _write(d / "manifest.json", _dump(_manifest(args, pairs, config, {"trials": args.trials})))
    _write(d / "trials.csv", trials_csv(results))
    faults = sum(r.fault is not None for r in results)
    if report is None:
        _write(d / "report.json", _dump({"n_trials": 0, "n_faults": faults}))
        print(d)
        print(f"all {faults} trials faulted")
        return EXIT_RUNTIME
    _write(d / "report.json", report.to_json())
    _write(d / "report.txt", report.to_table())
    print(d)
    sys.stdout.write(report.to_table())
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _config(args)
    pairs = _pairs(args)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    rows = threshold_sweep(pairs, args.thresholds, args.trials, args.seed, config, args.jobs)
    d = run_dir(args.out, args.seed)
    _write(d / "manifest.json", _dump(_manifest(args, pairs, config, {"thresholds": args.thresholds, "trials": args.trials})))
    text = sweep_csv(rows)
    _write(d / "sweep.csv", text)
    print(d)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_prompt(args) -> int:
    scene = load_scene_file(data_path("scenes", args.scene))
    templates = planner.load_templates(args.templates) if args.templates else None
    bundle = planner.build_prompt(args.instruction, scene, templates, args.image)
    text = bundle.render()
    if args.out:
        _write(Path(args.out), text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plan(args) -> int:
    scene = load_scene_file(data_path("scenes", args.scene))
    bundle = planner.build_prompt(args.instruction, scene, None, args.image)
    endpoint = planner.EndpointConfig.from_env(args.vlm_timeout_s) if args.live else None
    resp = planner.request_plan(bundle, endpoint, args.fixtures)
    if not resp.ok:
        print(f"error: {resp.error}", file=sys.stderr)
        print(resp.raw_text, file=sys.stderr)
        return EXIT_INPUT
    text = serialize_plan(resp.plan)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _add_run_flags(p: argparse.ArgumentParser, multi_plan: bool) -> None:
    p.add_argument("--scene", action="append", required=True, help="scene file or bundled scene name")
    p.add_argument("--plan", action="append", required=True, help="plan file or bundled plan name" + (" (repeatable)" if multi_plan else ""))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.9, help="stage transition threshold")
    p.add_argument("--weighting", choices=("uniform", "adaptive"), default="adaptive")
    p.add_argument("--max-frames", type=int, default=450)
    p.add_argument("--no-randomize", action="store_true", help="keep the scene layout as authored")
    p.add_argument("--out", default="runs", help="parent directory for run outputs")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rmd", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a plan against a scene")
    p.add_argument("--plan", required=True)
    p.add_argument("--scene", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("encode", help="print the goal vector of one step")
    p.add_argument("--plan", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("run", help="run one seeded episode")
    _add_run_flags(p, multi_plan=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run seeded trials and aggregate metrics")
    _add_run_flags(p, multi_plan=True)
    p.add_argument("--trials", type=int, default=64)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("sweep", help="batch metrics at several transition thresholds")
    _add_run_flags(p, multi_plan=True)
    p.add_argument("--thresholds", type=float, nargs="+", default=[0.9, 0.95])
    p.add_argument("--trials", type=int, default=16)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("prompt", help="write the planner prompt bundle")
    p.add_argument("--instruction", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--image", help="top-view image file")
    p.add_argument("--templates", help="directory of section templates")
    p.add_argument("--out")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("plan", help="fetch a plan from the fixture store or a live endpoint")
    p.add_argument("--instruction", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--image")
    p.add_argument("--fixtures", help="fixture store directory")
    p.add_argument("--live", action="store_true", help="query the endpoint in RMD_VLM_URL")
    p.add_argument("--vlm-timeout-s", type=float, default=planner.DEFAULT_TIMEOUT_S)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PlanError as exc:
        print(f"plan error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SceneError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except planner.PlannerError as exc:
        print(f"planner error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything else is a runtime fault
        logger.exception("runtime fault")
        print(f"runtime fault: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
