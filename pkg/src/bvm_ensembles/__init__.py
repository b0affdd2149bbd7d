"""Deep ensembles for regression with MSE, Gaussian NLL and BVM losses."""

from .ensemble import EnsembleModel, GaussianPrediction, Schedule, aggregate, predict, train_ensemble, train_member
from .losses import LossKind, LossSpec, batch_loss, bvm_loss, mse_loss, nll_loss, taylor_bvm_loss
from .numerics import Rng

__version__ = "0.1.0"

__all__ = [
    "EnsembleModel",
    "GaussianPrediction",
    "LossKind",
    "LossSpec",
    "Rng",
    "Schedule",
    "aggregate",
    "batch_loss",
    "bvm_loss",
    "mse_loss",
    "nll_loss",
    "predict",
    "taylor_bvm_loss",
    "train_ensemble",
    "train_member",
]
