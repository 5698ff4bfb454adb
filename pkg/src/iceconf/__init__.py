"""Learning with noisy labels via instance-confidence embedding.

A classifier ``p = softmax(f(x))`` is trained jointly with a per-instance
confidence ``C`` through ``q = h(p; C)``; instances whose confidence collapses
towards zero are the likely mislabeled ones.
"""

from ._backend import BACKEND
from .detect import auroc, build_report, kde_curve, rank_by_confidence
from .errors import FormatError, InvalidInputError, TrainingFault
from .model import ConfidenceHead, ConfidenceTable, Mlp, confidence_of, forward, ice_forward, ice_loss
from .noise import NoisyDataset, corrupt_ccn, corrupt_idn, noisy_posterior, uniform_flip_matrix
from .train import RunHistory, TrainConfig, train_run

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfidenceHead",
    "ConfidenceTable",
    "FormatError",
    "InvalidInputError",
    "Mlp",
    "NoisyDataset",
    "RunHistory",
    "TrainConfig",
    "TrainingFault",
    "auroc",
    "build_report",
    "confidence_of",
    "corrupt_ccn",
    "corrupt_idn",
    "forward",
    "ice_forward",
    "ice_loss",
    "kde_curve",
    "noisy_posterior",
    "rank_by_confidence",
    "train_run",
    "uniform_flip_matrix",
]
