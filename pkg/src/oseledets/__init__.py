"""Tangent-slope dynamics of planar maps."""

__version__ = "0.1.0"

from .errors import (
    DivergenceError,
    DomainError,
    EmptyAccumulatorError,
    HorizontalTangentError,
    NoConvergenceError,
    OseledetsError,
    ParameterError,
    SingularStepError,
)
from .maps import MapModel, PlanarPoint, chirikov_taylor, fixed_points, generic_map, mcmillan
from .mobius import MobiusStepInput, classify_convergence, general_series
from .splitting import backward_slope_sweep, split_blocks, splitting_angle
from .stats import HistogramGrid, PhaseField, ensemble_decay
from .tangent import FtleAccumulator, TangentState, ftle_along, full_ftle, reduced_ftle, tangent_series

__all__ = [
    "DivergenceError", "DomainError", "EmptyAccumulatorError", "HorizontalTangentError",
    "NoConvergenceError", "OseledetsError", "ParameterError", "SingularStepError",
    "MapModel", "PlanarPoint", "chirikov_taylor", "fixed_points", "generic_map", "mcmillan",
    "MobiusStepInput", "classify_convergence", "general_series",
    "backward_slope_sweep", "split_blocks", "splitting_angle",
    "HistogramGrid", "PhaseField", "ensemble_decay",
    "FtleAccumulator", "TangentState", "ftle_along", "full_ftle", "reduced_ftle", "tangent_series",
    "__version__",
]
