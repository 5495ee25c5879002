"""Deep latent-variable kernel learning with neural SDE encoders.

Sparse variational GPs on latent codes produced by a Gaussian encoder or a
neural SDE flow, trained on a beta-weighted evidence lower bound.
"""

from .data import Dataset, load_table, split, standardize, toy_classify2d, toy_step
from .model import ModelConfig, ModelState
from .report import Metrics, evaluate, write_report
from .train import TrainSchedule, fit

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Metrics",
    "ModelConfig",
    "ModelState",
    "TrainSchedule",
    "evaluate",
    "fit",
    "load_table",
    "split",
    "standardize",
    "toy_classify2d",
    "toy_step",
    "write_report",
]
