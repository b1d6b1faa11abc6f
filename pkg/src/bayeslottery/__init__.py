"""Bayesian lottery tickets: mean-field VI networks and iterative pruning pipelines."""
from .estimators import LotteryTicketClassifier, VariationalClassifier
from .models import ModelConfig, build, predict_mean
from .optimizer import TrainConfig, train
from .pruning import PruneMask, commit_mask, prune_global
from .tickets import Ticket, imp, lrr, reinit_weights, shuffle_mask, transplant

__all__ = [
    "LotteryTicketClassifier",
    "ModelConfig",
    "PruneMask",
    "Ticket",
    "TrainConfig",
    "VariationalClassifier",
    "build",
    "commit_mask",
    "imp",
    "lrr",
    "predict_mean",
    "prune_global",
    "reinit_weights",
    "shuffle_mask",
    "train",
    "transplant",
]
