"""Multi-UAV task partitioning and open-route planning over terrain grids."""
from ._accel import backend
from .baselines import METHODS, BaselineConfig, run_method
from .geodesic import (DistanceCache, GeodesicResult, Trajectory, Unreachable, geodesic,
                       oracle_distance, pairwise_matrix, refresh_degraded, stitch_route)
from .plan import (ObjectiveWeights, Plan, PlanMetrics, RouteOrder, evaluate, objective,
                   route_length, validate_plan)
from .solver import MoveDescriptor, SearchConfig, SearchContext, search
from .terrain import (GeneratorSpec, Instance, InstanceError, TerrainGrid, generate_instance,
                      load_instance, save_instance)

__version__ = "0.1.0"
