"""
Interference alignment for MIMO cellular networks with partial connectivity.

Modules
-------
subspace     orthonormal-basis subspace algebra
network      scenarios, connectivity and seeded channels
feasibility  counting test for stream assignments
allocation   greedy stream assignment and subspace planning
transceiver  leakage minimization and intra-cell zero-forcing
evaluation   throughput, DoF estimates, bounds and comparison schemes
experiment   config files and seeded sweeps
cli          command line front end
"""

from .allocation import assign_greedy_full, assign_greedy_partial, plan_subspaces
from .evaluation import DoFBoundQuery, dof_bound, dof_slope, sum_throughput
from .experiment import ExperimentSpec, parse_config, run_sweep
from .feasibility import FeasibilityInstance, feasible_bruteforce, feasible_tree
from .network import (
    FullyConnected,
    Geometric,
    NetworkConfig,
    Symmetric,
    build_connectivity,
    sample_channels,
)
from .transceiver import TransceiverOptions, suppress_inter_cell, zero_force_intra_cell

__version__ = "0.1.0"
