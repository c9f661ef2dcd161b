"""Command-line front end.

    voxplore run SCENARIO -o DIR
    voxplore compare SCENARIO --strategies hungarian,greedy,independent --seeds 1..20 -o FILE
    voxplore gen-world --kind K --dims X,Y,Z --seed S --fires F -o FILE

Exit codes: 0 success, 1 error, 2 a run stopped at max_ticks before
exploration finished (outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import scenario as scn
from .octree import map_to_text
from .sim import Metrics, simulate
from .strategy import Coordination, StrategyKind
from .world import WorldError, generate_world, interior_traversable_count, world_to_text

log = logging.getLogger("voxplore")

EXIT_OK, EXIT_ERROR, EXIT_INCOMPLETE = 0, 1, 2

METRICS_HEADER = ["tick", "coverage", "frontier_cells", "robot_id", "distance"]
COMPARE_HEADER = ["strategy", "seed", "ticks", "coverage", "total_distance", "detections"]


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------- formatting


def metrics_csv(metrics: Metrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for rec in metrics.series:
        for rid, dist in enumerate(rec.distances):
            w.writerow([rec.tick, repr(rec.coverage), rec.frontier_cells, rid, repr(dist)])
    return buf.getvalue()


def summary_json(sc: scn.Scenario, metrics: Metrics) -> str:
    doc = {
        "scenario_digest": scn.digest(sc),
        "ticks": metrics.ticks,
        "coverage": metrics.coverage,
        "total_distance": metrics.total_distance,
        "detections": [{"voxel": list(d.voxel), "tick": d.tick, "robot_id": d.robot_id} for d in metrics.detections],
        "map_nodes": metrics.map_nodes,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------- commands


def cmd_run(scenario_path: str | Path, out_dir: str | Path) -> int:
    try:
        sc = scn.load_scenario(scenario_path)
    except (OSError, scn.ScenarioError) as exc:
        print(f"error: {scenario_path}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        sim = simulate(sc)
        metrics = sim.metrics()
        (out / "metrics.csv").write_text(metrics_csv(metrics))
        (out / "summary.json").write_text(summary_json(sc, metrics))
        (out / "map.txt").write_text(map_to_text(sim.map))
        (out / "world.txt").write_text(world_to_text(sim.world))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if not metrics.completed:
        print(f"stopped at max_ticks={sc.max_ticks} before exploration finished", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


def parse_seeds(text: str) -> list[int]:
    """``"1..20"``, ``"1,4,9"`` or a mix such as ``"1..3,7"``; ranges are inclusive."""
    seeds: list[int] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = (int(v) for v in part.split(".."))
                if hi < lo:
                    raise UsageError(f"empty seed range {part!r}")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed spec {part!r}") from None
    if not seeds:
        raise UsageError("at least one seed is required")
    if min(seeds) < 0:
        raise UsageError("seeds must be >= 0")
    return sorted(set(seeds))


def parse_strategy(token: str) -> dict:
    """``coordination``, ``kind`` or ``kind:coordination`` -> StrategyConfig overrides."""
    kinds = {k.value: k for k in StrategyKind}
    coords = {c.value: c for c in Coordination}
    parts = token.split(":")
    if len(parts) == 2 and parts[0] in kinds and parts[1] in coords:
        return {"kind": kinds[parts[0]], "coordination": coords[parts[1]]}
    if len(parts) == 1 and parts[0] in coords:
        return {"coordination": coords[parts[0]]}
    if len(parts) == 1 and parts[0] in kinds:
        return {"kind": kinds[parts[0]]}
    raise UsageError(
        f"unknown strategy {token!r}; use a coordination ({', '.join(coords)}), "
        f"a kind ({', '.join(kinds)}) or kind:coordination"
    )


@dataclass(frozen=True)
class RunRow:
    strategy: str
    seed: int
    ticks: int
    coverage: float
    total_distance: float
    detections: int
    completed: bool


def _one_run(job: tuple[str, int, scn.Scenario]) -> RunRow:
    label, seed, sc = job
    m = simulate(sc).metrics()
    return RunRow(label, seed, m.ticks, m.coverage, m.total_distance, len(m.detections), m.completed)


def _median(values: Sequence[float]) -> str:
    return repr(float(statistics.median(values))) if values else ""


def compare_outputs(rows: Sequence[RunRow], labels: Sequence[str], digest: str) -> tuple[str, str]:
    rows = sorted(rows, key=lambda r: (r.strategy, r.seed))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_HEADER)
    for r in rows:
        w.writerow([r.strategy, r.seed, r.ticks, repr(r.coverage), repr(r.total_distance), r.detections])
    report: dict = {"scenario_digest": digest, "strategies": {}}
    for label in sorted(labels):
        done = [r for r in rows if r.strategy == label and r.completed]
        w.writerow(
            [
                label,
                "median",
                _median([r.ticks for r in done]),
                _median([r.coverage for r in done]),
                _median([r.total_distance for r in done]),
                _median([r.detections for r in done]),
            ]
        )
        report["strategies"][label] = {
            "completed_runs": len(done),
            "ticks": _agg([r.ticks for r in done]),
            "coverage": _agg([r.coverage for r in done]),
            "incomplete_seeds": [r.seed for r in rows if r.strategy == label and not r.completed],
        }
    return buf.getvalue(), json.dumps(report, sort_keys=True, indent=2) + "\n"


def _agg(values: Sequence[float]) -> dict | None:
    if not values:
        return None
    return {"median": float(statistics.median(values)), "min": float(min(values)), "max": float(max(values))}


def cmd_compare(
    scenario_path: str | Path,
    strategies: Sequence[str],
    seeds: Sequence[int],
    output: str | Path,
    jobs: int = 1,
) -> int:
    try:
        if not strategies:
            raise UsageError("at least one strategy is required")
        if not seeds:
            raise UsageError("at least one seed is required")
        overrides = {s: parse_strategy(s) for s in strategies}
        base = scn.load_scenario(scenario_path)
    except (UsageError, OSError, scn.ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    work = [
        (label, seed, base.with_strategy(**overrides[label]).with_seed(seed))
        for label in sorted(overrides)
        for seed in sorted(seeds)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_one_run, work))
    else:
        rows = [_one_run(job) for job in work]
    table, report = compare_outputs(rows, list(overrides), scn.digest(base))
    out = Path(output)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table)
        out.with_suffix(".json").write_text(report)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if all(r.completed for r in rows) else EXIT_INCOMPLETE


def cmd_gen_world(kind: str, dims: Sequence[int], seed: int, fire_count: int, output: str | Path) -> int:
    try:
        world = generate_world(kind, dims, seed, fire_count)
        Path(output).write_text(world_to_text(world))
    except (WorldError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"traversable voxels: {interior_traversable_count(world)}")
    return EXIT_OK


# ---------------------------------------------------------------------- argparse


def _dims(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must be X,Y,Z integers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"dims must be X,Y,Z integers, got {text!r}")
    return parts  # type: ignore[return-value]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxplore", description="Multi-robot 3D frontier exploration simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario and write metrics, summary, map and world")
    r.add_argument("scenario")
    r.add_argument("-o", "--output", required=True, help="output directory")

    c = sub.add_parser("compare", help="run strategies x seeds and tabulate")
    c.add_argument("scenario")
    c.add_argument("--strategies", required=True, help="comma list, e.g. hungarian,greedy,independent")
    c.add_argument("--seeds", required=True, help="e.g. 1..20 or 1,2,3")
    c.add_argument("-o", "--output", required=True, help="CSV path; a .json report is written beside it")
    c.add_argument("-j", "--jobs", type=int, default=1)

    g = sub.add_parser("gen-world", help="generate a world file")
    g.add_argument("--kind", required=True)
    g.add_argument("--dims", required=True, type=_dims)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--fires", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return cmd_run(args.scenario, args.output)
    if args.command == "compare":
        try:
            seeds = parse_seeds(args.seeds)
        except UsageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        strategies = [s for s in (t.strip() for t in args.strategies.split(",")) if s]
        return cmd_compare(args.scenario, strategies, seeds, args.output, args.jobs)
    return cmd_gen_world(args.kind, args.dims, args.seed, args.fires, args.output)


if __name__ == "__main__":
    sys.exit(main())
