"""Scenario documents: parsing, validation, defaults and canonical form.

A scenario is one JSON object; ``scenario.schema.json`` (shipped with the
package) is the published schema. :func:`parse_scenario` fills every default
and :func:`to_canonical` writes it back out, so parse -> canonical -> parse is
the identity.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .octree import MAX_DEPTH_LIMIT, InvalidParams, LogOddsParams, depth_for
from .planner import EllipseSpec, PotentialFieldConfig
from .strategy import Coordination, StrategyConfig, StrategyKind
from .world import Key, SensorConfig, WorldError, WorldGrid, generate_world, load_world


class ScenarioError(ValueError):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass


@dataclass(frozen=True)
class WorldSpec:
    kind: str | None = None
    dims: Key | None = None
    seed: int | None = None
    fire_count: int = 0
    resolution: float = 1.0
    file: str | None = None


@dataclass(frozen=True)
class DynamicObstacle:
    tick: int
    voxel: Key


@dataclass(frozen=True)
class Scenario:
    world: WorldSpec
    robots: tuple[Key, ...]
    sensor: SensorConfig
    strategy: StrategyConfig
    potential_field: PotentialFieldConfig
    log_odds: LogOddsParams
    max_depth: int
    ellipse: EllipseSpec | None
    max_ticks: int
    seed: int
    dynamic_obstacles: tuple[DynamicObstacle, ...] = ()
    base_dir: str = field(default=".", compare=False)

    @property
    def world_seed(self) -> int:
        return self.seed if self.world.seed is None else self.world.seed

    def build_world(self) -> WorldGrid:
        return _build_world(self.world, self.world_seed, self.base_dir)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=int(seed))

    def with_strategy(self, **changes: Any) -> "Scenario":
        return replace(self, strategy=replace(self.strategy, **changes))


@lru_cache(maxsize=1)
def schema() -> dict:
    return json.loads(resources.files("voxplore").joinpath("scenario.schema.json").read_text())


def _build_world(spec: WorldSpec, seed: int, base_dir: str) -> WorldGrid:
    if spec.file is not None:
        p = Path(spec.file)
        if not p.is_absolute():
            p = Path(base_dir) / p
        return load_world(p)
    return generate_world(spec.kind, spec.dims, seed, spec.fire_count, spec.resolution)  # type: ignore[arg-type]


def parse_scenario(document: str, base_dir: str | Path = ".") -> Scenario:
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(raw, base_dir)


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    return parse_scenario(p.read_text(), p.parent)


def scenario_from_dict(raw: Any, base_dir: str | Path = ".") -> Scenario:
    errors = sorted(jsonschema.Draft202012Validator(schema()).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ParseError(f"{where}: {e.message}")

    w = raw["world"]
    if "file" in w:
        wspec = WorldSpec(file=w["file"])
    else:
        wspec = WorldSpec(
            kind=w["kind"],
            dims=tuple(int(v) for v in w["dims"]),  # type: ignore[arg-type]
            seed=w.get("seed"),
            fire_count=int(w.get("fire_count", 0)),
            resolution=float(w.get("resolution", 1.0)),
        )
    seed = int(raw.get("seed", 0))
    try:
        world = _build_world(wspec, seed if wspec.seed is None else wspec.seed, str(base_dir))
    except (WorldError, OSError) as exc:
        raise ValidationError(f"world: {exc}") from None
    res = world.resolution

    robots = tuple(tuple(int(v) for v in r) for r in raw["robots"])
    for i, r in enumerate(robots):
        if not world.in_bounds(r):
            raise ValidationError(f"robots/{i}: start {r} outside the world")
        if world.is_occupied(r):
            raise ValidationError(f"robots/{i}: start {r} is inside an obstacle")
        if r in robots[:i]:
            raise ValidationError(f"robots/{i}: start {r} duplicates robot {robots.index(r)}")

    s = raw.get("sensor", {})
    try:
        sensor = SensorConfig(
            max_range=float(s.get("max_range", 4.0)),
            horizontal_rays=int(s.get("horizontal_rays", 24)),
            vertical_rays=int(s.get("vertical_rays", 7)),
            vertical_fov=float(s.get("vertical_fov", math.pi)),
            fire_detect_range=None if s.get("fire_detect_range") is None else float(s["fire_detect_range"]),
            range_noise=float(s.get("range_noise", 0.0)),
        )
    except ValueError as exc:
        raise ValidationError(f"sensor: {exc}") from None

    st = raw.get("strategy", {})
    radius = st.get("discount_radius")
    try:
        strategy = StrategyConfig(
            kind=StrategyKind(st.get("kind", "cost_utility")),
            lam=float(st.get("lambda", 1.0)),
            coordination=Coordination(st.get("coordination", "hungarian")),
            discount_radius=2.0 * sensor.max_range if radius is None else float(radius),
            replan_interval=int(st.get("replan_interval", 25)),
            min_cluster_size=int(st.get("min_cluster_size", 3)),
        )
    except ValueError as exc:
        raise ValidationError(f"strategy: {exc}") from None

    pf = raw.get("potential_field", {})
    try:
        pfield = PotentialFieldConfig.for_resolution(res, **{k: v for k, v in pf.items()})
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"potential_field: {exc}") from None

    mp = raw.get("map", {})
    try:
        log_odds = LogOddsParams(**{k: float(v) for k, v in mp.items() if k != "max_depth"})
    except InvalidParams as exc:
        raise ValidationError(f"map: {exc}") from None
    needed = depth_for(world.dims)
    max_depth = mp.get("max_depth")
    max_depth = needed if max_depth is None else int(max_depth)
    if not needed <= max_depth <= MAX_DEPTH_LIMIT:
        raise ValidationError(f"map/max_depth: {max_depth} cannot hold world dims {world.dims}")
    if any(o != 0.0 for o in world.origin):
        raise ValidationError("world: map frame requires origin (0, 0, 0)")

    el = raw.get("ellipse")
    ellipse = None
    if el is not None:
        center = el.get("center")
        try:
            ellipse = EllipseSpec(
                center=tuple(float(v) for v in (center if center is not None else world.building_center)),  # type: ignore[arg-type]
                a=float(el["a"]),
                b=float(el["b"]),
                altitude=float(el["altitude"]),
                count=int(el["count"]),
            )
        except ValueError as exc:
            raise ValidationError(f"ellipse: {exc}") from None

    dyn = []
    for i, d in enumerate(raw.get("dynamic_obstacles", [])):
        v = tuple(int(x) for x in d["voxel"])
        if not world.in_bounds(v):
            raise ValidationError(f"dynamic_obstacles/{i}: voxel {v} outside the world")
        dyn.append(DynamicObstacle(int(d["tick"]), v))  # type: ignore[arg-type]
    dyn.sort(key=lambda o: (o.tick, o.voxel))

    return Scenario(
        world=wspec,
        robots=robots,  # type: ignore[arg-type]
        sensor=sensor,
        strategy=strategy,
        potential_field=pfield,
        log_odds=log_odds,
        max_depth=max_depth,
        ellipse=ellipse,
        max_ticks=int(raw.get("max_ticks", 2000)),
        seed=seed,
        dynamic_obstacles=tuple(dyn),
        base_dir=str(base_dir),
    )


def to_dict(sc: Scenario) -> dict:
    if sc.world.file is not None:
        world: dict = {"file": sc.world.file}
    else:
        world = {
            "kind": sc.world.kind,
            "dims": list(sc.world.dims),  # type: ignore[arg-type]
            "seed": sc.world.seed,
            "fire_count": sc.world.fire_count,
            "resolution": sc.world.resolution,
        }
    s, st, pf, lo = sc.sensor, sc.strategy, sc.potential_field, sc.log_odds
    return {
        "world": world,
        "robots": [list(r) for r in sc.robots],
        "sensor": {
            "max_range": s.max_range,
            "horizontal_rays": s.horizontal_rays,
            "vertical_rays": s.vertical_rays,
            "vertical_fov": s.vertical_fov,
            "fire_detect_range": s.fire_detect_range,
            "range_noise": s.range_noise,
        },
        "strategy": {
            "kind": st.kind.value,
            "lambda": st.lam,
            "coordination": st.coordination.value,
            "discount_radius": st.discount_radius,
            "replan_interval": st.replan_interval,
            "min_cluster_size": st.min_cluster_size,
        },
        "potential_field": {
            "eta": pf.eta,
            "d0": pf.d0,
            "attract_gain": pf.attract_gain,
            "step": pf.step,
            "max_iters": pf.max_iters,
            "clearance": pf.clearance,
        },
        "map": {
            "l_hit": lo.l_hit,
            "l_miss": lo.l_miss,
            "l_min": lo.l_min,
            "l_max": lo.l_max,
            "occ_threshold": lo.occ_threshold,
            "max_depth": sc.max_depth,
        },
        "ellipse": None
        if sc.ellipse is None
        else {
            "center": list(sc.ellipse.center),
            "a": sc.ellipse.a,
            "b": sc.ellipse.b,
            "altitude": sc.ellipse.altitude,
            "count": sc.ellipse.count,
        },
        "dynamic_obstacles": [{"tick": d.tick, "voxel": list(d.voxel)} for d in sc.dynamic_obstacles],
        "max_ticks": sc.max_ticks,
        "seed": sc.seed,
    }


def to_canonical(sc: Scenario) -> str:
    return json.dumps(to_dict(sc), sort_keys=True, indent=2) + "\n"


def digest(sc: Scenario) -> str:
    return hashlib.sha256(to_canonical(sc).encode("utf-8")).hexdigest()
