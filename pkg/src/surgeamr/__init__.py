"""Storm-surge shallow water solver on adaptively refined lat-lon patches."""

__version__ = "0.1.0"

from .grid import (GeoDomain, Patch, PhysConfig, StateVector,
                   cell_size_meters, initialize_lake_at_rest,
                   surface_elevation)
from .riemann import RiemannSolution, einfeldt_speeds, limiter, solve_augmented
from .sources import FrictionConfig, ManningRegion, coriolis_parameter, wind_drag
from .storm import StormSample, StormState, holland_B, interpolate_track
from .amr import LevelHierarchy, RefinementCriteria, RefinementRegion

__all__ = [
    "GeoDomain", "Patch", "PhysConfig", "StateVector", "cell_size_meters",
    "initialize_lake_at_rest", "surface_elevation", "RiemannSolution",
    "einfeldt_speeds", "limiter", "solve_augmented", "FrictionConfig",
    "ManningRegion", "coriolis_parameter", "wind_drag", "StormSample",
    "StormState", "holland_B", "interpolate_track", "LevelHierarchy",
    "RefinementCriteria", "RefinementRegion", "__version__",
]
