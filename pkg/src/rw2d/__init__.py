"""Thick points of the planar simple random walk: exact potential theory,
excursion counting, history combinatorics and seeded experiments."""

from .lattice import DiskSpec, LatticePoint, WalkState, boundary_of, random_step, walk_until_exit
from .potential import GreenTable, green, hitting_distribution, local_time_law
from .localtime import LocalTimeLedger, max_local_time, psi_count, theta_count
from .excursion import ExcursionTracker, RadiiSchedule, SuccessCriterion, is_n_successful
from .histories import HistoryVector, history_count, history_probability, successful_prob_dp
from .experiments import ExperimentReport

__version__ = "0.1.0"
