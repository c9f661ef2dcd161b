"""Deterministic multi-robot 3D frontier exploration on an octree occupancy map."""

from .frontier import FrontierCell, FrontierCluster, cluster_frontiers, detect_frontiers
from .octree import LogOddsParams, OccupancyOctree, VoxelState
from .planner import Path, PotentialFieldConfig, plan_path, validate_and_correct
from .scenario import Scenario, load_scenario, parse_scenario
from .sim import Metrics, Simulation, run, simulate
from .strategy import Coordination, StrategyConfig, StrategyKind
from .world import Pose, SensorConfig, WorldGrid, cast_ray, generate_world, sense

__version__ = "0.1.0"
