"""Multi-task maximum-entropy inverse reinforcement learning."""
from .errors import (ConfigError, ConvergenceError, DataError, InvalidArgument, InvalidState,
                     MtirlError, NumericError, UnsupportedMode)
from .maxent import MaxEntModel, TrajectorySpaceSpec, fit_maxent, partition_and_expectation
from .mdp_core import FeatureMap, Mdp, Policy
from .me_mtirl import ClusterModel, MtirlConfig, fit
from .modelio import FittedModel, load_model, save_model
from .trajectories import Dataset, Trajectory

__version__ = "0.1.0"
