"""Heterogeneity-aware client selection for federated learning.

A linear contextual bandit with Thompson sampling picks which clients
train each round; noise-robust local losses and generators for non-IID
data, label noise and straggler latency complete the simulator.
"""

__version__ = "0.1.0"

from .bandit import (LinUCBSelector, RidgeState, SelectionResult, ThompsonSamplingSelector,
                     exploration_width, ridge_solve, score_clients, select_top_m, ts_sample,
                     ucb_score_clients, update_state)
from .losses import (RobustLossConfig, cross_entropy, make_pseudo_labels, reverse_cross_entropy,
                     robust_loss)
from .model import ModelParams, OptimizerConfig, RobustSoftmaxClassifier, evaluate, forward, local_training
from .orchestrator import FederatedSimulation, RoundRecord, build_context, compute_reward, fedavg

__all__ = [
    "FederatedSimulation", "LinUCBSelector", "ModelParams", "OptimizerConfig", "RidgeState",
    "RobustLossConfig", "RobustSoftmaxClassifier", "RoundRecord", "SelectionResult",
    "ThompsonSamplingSelector", "build_context", "compute_reward", "cross_entropy", "evaluate",
    "exploration_width", "fedavg", "forward", "local_training", "make_pseudo_labels",
    "reverse_cross_entropy", "ridge_solve", "robust_loss", "score_clients", "select_top_m",
    "ts_sample", "ucb_score_clients", "update_state",
]
