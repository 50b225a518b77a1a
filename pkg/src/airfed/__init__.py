"""Two-tier over-the-air federated learning simulator.

Devices are clustered every round by a joint distance/data-importance
criterion, subordinate devices analog-superpose their normalized gradients at
a lead device, leads forward to the receiver, and the per-round transmit
powers and de-noising factor come from an alternating exact-block solver.
"""

from .aircomp import (GradientStats, PowerAllocation, PowerBudgets, compute_stats,
                      estimate_global, normalize)
from .channel import Geometry, sample_channels, sample_ring_geometry
from .clustering import KERNEL_BACKEND, ClusterAssignment, assign_clusters, cluster
from .config import ExperimentConfig, make_config
from .convergence import GapBoundInputs, gap_bound, gap_bound_series
from .harness import Experiment, RoundMetrics, TrainResult, run_experiment, run_sweep
from .power import alternating_minimize, objective_f

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment", "Experiment", "ExperimentConfig", "GapBoundInputs",
    "Geometry", "GradientStats", "KERNEL_BACKEND", "PowerAllocation",
    "PowerBudgets", "RoundMetrics", "TrainResult", "alternating_minimize",
    "assign_clusters", "cluster", "compute_stats", "estimate_global",
    "gap_bound", "gap_bound_series", "make_config", "normalize", "objective_f",
    "run_experiment", "run_sweep", "sample_channels", "sample_ring_geometry",
    "__version__",
]
