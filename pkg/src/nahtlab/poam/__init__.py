"""The POAM learner and its baseline/ablation variants."""

from .losses import ed_loss, normalize_advantages, ppo_actor_loss, td_lambda_targets, value_loss
from .nets import NetConfig, NetworkRuntime, PoamNets, load_policy, save_policy
from .trainer import Learner, PpoHyper, TrainVariant, train_iteration

__all__ = [
    "ed_loss",
    "value_loss",
    "ppo_actor_loss",
    "td_lambda_targets",
    "normalize_advantages",
    "NetConfig",
    "PoamNets",
    "NetworkRuntime",
    "load_policy",
    "save_policy",
    "Learner",
    "PpoHyper",
    "TrainVariant",
    "train_iteration",
]
