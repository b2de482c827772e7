"""Submodular reinforcement learning: SubPO/ModPO policy gradients and exact oracles."""
from .core import (Batch, ConfigurationError, SizeRefusal, Smdp, Trajectory, VisitedSet, rollout,
                   rollout_batch, rollout_streams, trajectory_value)
from .estimator import BaselineState, GradientEstimate, entropy_gradient, modpo_gradient, subpo_gradient
from .policies import MlpPolicy, ObservationSpec, TabularSoftmax, load_policy, make_policy
from .rewards import (GpMutualInformation, ItemCollection, Modular, SetFunction, WeightedCoverage,
                      marginal_gain, modularize)
from .trainer import LearningCurve, TrainConfig, evaluate_policy, train

__version__ = "0.1.0"
