"""Episode filtering for RL agents by DTW comparison with safe and unsafe demonstrations."""

from .core import DemoSet, EpisodeRecord, ReplayMemory, Trajectory, TrajectoryMode, Transition, load_demo_set
from .dtw import dtw_cost
from .filters import FilterDecision, MethodSpec, StrategySpec, enumerate_methods, enumerate_strategies, evaluate
from .shield import Shield, ShieldConfig, run_episode

__all__ = [
    "DemoSet",
    "EpisodeRecord",
    "FilterDecision",
    "MethodSpec",
    "ReplayMemory",
    "Shield",
    "ShieldConfig",
    "StrategySpec",
    "Trajectory",
    "TrajectoryMode",
    "Transition",
    "dtw_cost",
    "enumerate_methods",
    "enumerate_strategies",
    "evaluate",
    "load_demo_set",
    "run_episode",
]
