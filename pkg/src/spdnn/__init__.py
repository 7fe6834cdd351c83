"""Sparse-penalised deep ReLU networks for dependent data, with experiment tooling."""

from .errors import SPDNNError
from .losses import L1, LOGISTIC, LossSpec, huber, parse_loss
from .network import Architecture, Network
from .penalty import PenaltySpec, n_alpha, tune
from .trainer import TrainConfig, fit

__all__ = [
    "Architecture", "Network", "LossSpec", "L1", "LOGISTIC", "huber", "parse_loss",
    "PenaltySpec", "n_alpha", "tune", "TrainConfig", "fit", "SPDNNError",
]
__version__ = "0.1.0"
