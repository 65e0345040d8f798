"""Fair restless multi-armed bandits: SoftFair, Whittle-index and baseline policies with an exact joint-MDP oracle."""

from .core import (ActionVector, EpisodeTrace, PolicyDecision, RmabInstance, TransitionModel, ValueTable,
                   load_instance, save_instance, validate_instance)
from .datasets import CpapSpec, SyntheticSpec, generate_cpap, generate_synthetic
from .sim import ExperimentConfig, MetricsReport, action_entropy, intervention_benefit, pull_histogram, run_experiment
from .softfair import SoftFairPolicy, run_softfair_episode
from .whittle import WhittlePolicy, index_tables, whittle_index

__version__ = "0.1.0"
