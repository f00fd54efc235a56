"""Metastable piecewise-expanding interval maps.

Build maps that preserve a prescribed piecewise-constant density, couple two
mirrored copies through small escape gates, and estimate the invariant
density of the coupled system with an exact, an Ulam or an orbit engine.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .density import (CellPartition, PiecewiseConstantDensity, convex_combination,
                      discretize_density, from_weights, l1_distance, mirror)
from .errors import ConvergenceError, InfeasibleGateError, MetastableError
from .experiments import (EngineConfig, MapFamily, SweepRecord, gates_for_target_alpha,
                          reproduce_example, run_convergence_sweep, run_extreme_limit)
from .interval_map import (AffineBranch, MetastableSystem, PiecewiseLinearMap,
                           build_semi_markov_map, hole_measures, infinitesimal_holes,
                           mirror_double, open_gates, validate_conditions)
from .orbit import OccupationStats, OrbitConfig, simulate_chains, simulate_orbit
from .stochastic import TransitionMatrix, build_transition_matrix, stationary_vector
from .transfer import (DensityEstimate, UlamMatrix, exact_fp_density, spectral_diagnostics,
                       stationary_density, ulam_matrix)

__all__ = [
    "BACKEND", "AffineBranch", "CellPartition", "ConvergenceError", "DensityEstimate",
    "EngineConfig", "InfeasibleGateError", "MapFamily", "MetastableError", "MetastableSystem",
    "OccupationStats", "OrbitConfig", "PiecewiseConstantDensity", "PiecewiseLinearMap",
    "SweepRecord", "TransitionMatrix", "UlamMatrix", "build_semi_markov_map",
    "build_transition_matrix", "convex_combination", "discretize_density", "exact_fp_density",
    "from_weights", "gates_for_target_alpha", "hole_measures", "infinitesimal_holes",
    "l1_distance", "mirror", "mirror_double", "open_gates", "reproduce_example",
    "run_convergence_sweep", "run_extreme_limit", "simulate_chains", "simulate_orbit",
    "spectral_diagnostics", "stationary_density", "stationary_vector", "ulam_matrix",
    "validate_conditions",
]
