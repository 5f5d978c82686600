"""Density-matrix emulation, parameter-shift derivatives and training of QRNNs."""
from __future__ import annotations

from .ansatz import CASE_CONFIGS, AnsatzConfig, param_count, parameter_layout
from .datasets import SeriesSpec, WindowedDataset, generate, load_case, make_windows
from .derivatives import (EvalBudget, finite_diff_gradient, gradient_expectation, gradient_loss,
                          hessian_all, hessian_expectation, jacobian_expectation, loss_and_gradient)
from .engine import forward, forward_batch, sample_trajectory, step, step_naive
from .estimator import QRNNRegressor
from .exceptions import QRNNError
from .optim import minimize
from .training import QRNNModel, TrainConfig, TrainingReport, evaluate, train_multi_restart

__version__ = "0.1.0"

__all__ = [
    "CASE_CONFIGS", "AnsatzConfig", "param_count", "parameter_layout",
    "SeriesSpec", "WindowedDataset", "generate", "load_case", "make_windows",
    "EvalBudget", "finite_diff_gradient", "gradient_expectation", "gradient_loss",
    "hessian_all", "hessian_expectation", "jacobian_expectation", "loss_and_gradient",
    "forward", "forward_batch", "sample_trajectory", "step", "step_naive",
    "QRNNRegressor", "QRNNError", "minimize",
    "QRNNModel", "TrainConfig", "TrainingReport", "evaluate", "train_multi_restart",
]
