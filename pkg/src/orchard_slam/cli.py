"""Command-line entry points: simulate, run, baseline, eval, ablate.

Every command is deterministic given its inputs and seed and writes
byte-identical artifacts on re-runs. Schema and configuration errors exit
with status 2 and a message naming the offending field or frame.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import io as oio
from .config import (
    ConfigError,
    load_preset,
    load_scenario_file,
    preset_names,
    scenario_summary,
)
from .evaluation import ablation_run, baseline_map, evaluate, sweep_thresholds
from .pipeline import baseline_detection_positions, run_pipeline
from .simulator import generate_clutter, generate_orchard, generate_trajectory, simulate


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, type=Path, help="output directory")


def _scenario_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=preset_names(),
                   help="built-in scenario preset")
    g.add_argument("--config", type=Path, help="scenario config JSON file")
    p.add_argument("--seed", type=int, default=0, help="scenario seed")


def _load_scenario(args):
    if args.preset:
        return load_preset(args.preset)
    return load_scenario_file(args.config)


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args).with_seed(args.seed)
    trees = generate_orchard(scenario.orchard, seed=args.seed)
    clutter = generate_clutter(scenario.orchard, seed=args.seed)
    trajectory = generate_trajectory(scenario.orchard, scenario.trajectory)
    result = simulate(trees, trajectory, scenario.sensors, scenario.camera,
                      trunk_radius=scenario.orchard.trunk_radius, clutter=clutter)
    out = args.out
    oio.write_frame_log(out / "frames.jsonl", result.frames)
    oio.write_tree_map(out / "gt_trees.csv", result.ground_truth.trees)
    oio.write_trajectory(out / "gt_trajectory.csv",
                         list(result.ground_truth.trajectory))
    print(scenario_summary(scenario, args.seed))
    n_det = sum(len(f.detections) for f in result.frames)
    print(f"  wrote {len(result.frames)} frames, {n_det} detections -> {out}")
    return 0


def _pipeline_config(args, base=None):
    from .pipeline import PipelineConfig

    cfg = base if base is not None else PipelineConfig()
    overrides = {}
    if args.planting_distance is not None:
        overrides["planting_distance"] = args.planting_distance
    if getattr(args, "no_cascade", False):
        overrides["cascade_enabled"] = False
    if getattr(args, "no_inter_distance", False):
        overrides["inter_distance_enabled"] = False
    if getattr(args, "no_pca", False):
        overrides["pca_enabled"] = False
    if getattr(args, "use_clouds", False):
        overrides["use_clouds"] = True
    return replace(cfg, **overrides)


def cmd_run(args) -> int:
    records = oio.read_frame_log(args.log)
    base = load_scenario_file(args.config).pipeline if args.config else None
    cfg = _pipeline_config(args, base)
    result = run_pipeline(records, cfg)
    out = args.out
    oio.write_tree_map(out / "map.csv", result.tree_map)
    oio.write_trajectory(out / "trajectory.csv", result.trajectory)
    oio.write_graph_snapshot(out / "graph.json", result.graph)
    rep = result.batch_report
    print(f"processed {len(records)} frames: {len(result.tree_map)} trees, "
          f"{len(result.trajectory)} poses")
    print(f"final optimization: cost {rep.final_cost:.6g} after "
          f"{rep.iterations} iterations (converged: {rep.converged})")
    return 0


def cmd_baseline(args) -> int:
    records = oio.read_frame_log(args.log)
    points = baseline_detection_positions(records, confidence_floor=args.conf_floor)
    tree_map = baseline_map(points, eps=args.eps, min_samples=args.min_samples)
    oio.write_tree_map(args.out / "baseline_map.csv", tree_map)
    print(f"baseline: {len(points)} accumulated detections -> "
          f"{len(tree_map)} trees (eps={args.eps}, min_samples={args.min_samples})")
    return 0


def _parse_sweep(spec: str) -> list[float]:
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise ConfigError(
            f"--sweep expects start:stop:step, got {spec!r}") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"--sweep range is empty: {spec!r}")
    gates = []
    g = start
    while g <= stop + 1e-12:
        gates.append(round(g, 10))
        g += step
    return gates


def cmd_eval(args) -> int:
    pred = oio.read_tree_map(args.pred)
    gt = oio.read_tree_map(args.gt)
    gate = args.gate if args.gate is not None else args.pd / 2.0
    report = evaluate(pred, gt, gate, planting_distance=args.pd)
    out = args.out
    oio.write_eval_report(out / "report.json", report)
    if args.sweep:
        gates = _parse_sweep(args.sweep)
        oio.write_sweep_csv(out / "sweep.csv",
                            sweep_thresholds(pred, gt, gates, planting_distance=args.pd))
    oio.write_map_overlay_svg(out / "overlay.svg", pred, gt, gate)
    print(f"eval @ gate {gate:g} m: tp={report.tp} fp={report.fp} fn={report.fn} "
          f"precision={report.precision:.3f} recall={report.recall:.3f} "
          f"f1={report.f1:.3f} mean_tp_error={report.mean_tp_error:.3f}")
    return 0


def cmd_ablate(args) -> int:
    records = oio.read_frame_log(args.log)
    gt = oio.read_tree_map(args.gt)
    base = load_scenario_file(args.config).pipeline if args.config else None
    cfg = _pipeline_config(args, base)
    toggles = {
        "full": dict(pca=True, cascade=True, inter_distance=True),
        "no_pca": dict(pca=False, cascade=True, inter_distance=True),
        "no_cascade": dict(pca=True, cascade=False, inter_distance=True),
        "no_inter_distance": dict(pca=True, cascade=True, inter_distance=False),
    }
    results = {}
    for name, t in toggles.items():
        report = ablation_run(records, gt, cfg, **t)
        results[name] = report
        print(f"{name:18s} recall={report.recall:.3f} precision={report.precision:.3f} "
              f"mean_tp_error={report.mean_tp_error:.3f}")
    out = args.out
    for name, report in results.items():
        oio.write_eval_report(out / f"ablation_{name}.json", report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orchard-slam",
        description="Tree mapping in simulated orchard rows: scenario "
                    "simulation, SLAM pipeline, clustering baseline, and "
                    "gated evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a scenario frame log + ground truth")
    _scenario_args(p)
    _add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run the mapping pipeline on a frame log")
    p.add_argument("--log", required=True, type=Path, help="frame log (JSONL)")
    p.add_argument("--config", type=Path, help="scenario config JSON (pipeline section)")
    p.add_argument("--planting-distance", type=float, default=None)
    p.add_argument("--no-cascade", action="store_true",
                   help="replace the cascade stage with global association")
    p.add_argument("--no-inter-distance", action="store_true",
                   help="omit inter-landmark distance factors")
    p.add_argument("--use-clouds", action="store_true",
                   help="localize trunks from point clouds when present")
    p.add_argument("--no-pca", action="store_true",
                   help="cloud centers from plain centroids instead of PCA")
    _add_out(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("baseline", help="accumulate-and-cluster baseline map")
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--min-samples", type=int, default=5)
    p.add_argument("--conf-floor", type=float, default=0.1)
    _add_out(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="score a predicted map against ground truth")
    p.add_argument("--pred", required=True, type=Path, help="predicted map CSV")
    p.add_argument("--gt", required=True, type=Path, help="ground-truth map CSV")
    p.add_argument("--pd", type=float, default=1.1, help="planting distance (m)")
    p.add_argument("--gate", type=float, default=None,
                   help="matching gate in meters (default: pd/2)")
    p.add_argument("--sweep", default=None,
                   help="also evaluate gates start:stop:step")
    _add_out(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run component-ablation comparisons")
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--planting-distance", type=float, default=None)
    _add_out(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, oio.FrameLogError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
