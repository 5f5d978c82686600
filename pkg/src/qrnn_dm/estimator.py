"""scikit-learn compatible regressor around the QRNN trainer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .ansatz import AnsatzConfig, param_count
from .derivatives import EvalBudget, loss_and_gradient
from .engine import forward_batch
from .exceptions import ShapeError, TrainingFailureError
from .training import QRNNModel, TrainConfig, evaluate, initial_parameters, rmse_loss, run_restarts


def check_window_arrays(X, y=None, n_v: int | None = None, horizon: int | None = None):
    """Coerce windows to float arrays of shape (n, T, n_v) and targets to (n, H)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[..., None]
    if X.ndim != 3:
        raise ShapeError(f"X must be (n_windows, T, n_vars), got shape {X.shape}")
    if n_v is not None and X.shape[2] != n_v:
        raise ShapeError(f"X has {X.shape[2]} variables, expected {n_v}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or infinite values")
    if y is None:
        return X
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != X.shape[0]:
        raise ShapeError(f"y must be (n_windows, horizon) matching X, got {y.shape}")
    if y.shape[1] > X.shape[1] or (horizon is not None and y.shape[1] != horizon):
        raise ShapeError(f"horizon {y.shape[1]} does not fit windows of length {X.shape[1]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains NaN or infinite values")
    return X, y


class QRNNRegressor(RegressorMixin, BaseEstimator):
    """Quantum recurrent network emulated with density matrices.

    ``fit`` takes windows ``X`` of shape (n_windows, T, n_vars) and targets
    ``y`` of shape (n_windows, horizon): the last ``horizon`` outputs of each
    window are regressed. Several random restarts are run; with an
    ``eval_set`` the restart with the lowest validation RMSE is kept,
    otherwise the lowest training RMSE.

    Parameters
    ----------
    n_exchange, n_memory : qubits in the measured and the memory register.
    n_layers : entangling layers in the evolution block.
    n_reuploads : extra data uploads in the encoding block.
    gradient : "analytical" (parameter shift) or "numerical" (forward differences).
    n_jobs : restarts run in this many worker processes (None: all CPUs).
    """

    def __init__(self, n_exchange=1, n_memory=2, n_layers=2, n_reuploads=3, restarts=8,
                 g_tol=1e-3, max_iter=1000, gradient="analytical", epsilon=1e-8,
                 random_state=0, n_jobs=1):
        self.n_exchange = n_exchange
        self.n_memory = n_memory
        self.n_layers = n_layers
        self.n_reuploads = n_reuploads
        self.restarts = restarts
        self.g_tol = g_tol
        self.max_iter = max_iter
        self.gradient = gradient
        self.epsilon = epsilon
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _ansatz(self, n_v: int) -> AnsatzConfig:
        return AnsatzConfig(self.n_exchange, self.n_memory, self.n_layers, self.n_reuploads, n_v)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(g_tol=self.g_tol, max_iter=self.max_iter, restarts=self.restarts,
                           gradient=self.gradient, epsilon=self.epsilon,
                           seed=self.random_state if self.random_state is not None else 0,
                           workers=self.n_jobs)

    def fit(self, X, y, eval_set=None, theta0=None):
        X, y = check_window_arrays(X, y)
        config = self._ansatz(X.shape[2])
        tc = self._train_config()
        Xv = Yv = None
        if eval_set is not None:
            Xv, Yv = check_window_arrays(*eval_set, n_v=X.shape[2], horizon=y.shape[1])
        if theta0 is not None:
            starts = [np.asarray(theta0, dtype=float)]
        else:
            seeds = np.random.SeedSequence(tc.seed).spawn(tc.restarts)
            starts = [initial_parameters(config, np.random.default_rng(s)) for s in seeds]
        runs = run_restarts(X, y, Xv, Yv, config, tc, starts)
        usable = [i for i, r in enumerate(runs) if "theta" in r and not r["degraded"]]
        if not usable:
            raise TrainingFailureError("every restart failed", runs)
        score = [runs[i]["val_rmse"] if Xv is not None else runs[i]["loss"] for i in usable]
        best = usable[int(np.argmin(score))]
        self.config_ = config
        self.theta_ = runs[best]["theta"]
        self.best_restart_ = best
        self.n_iter_ = runs[best]["n_it"]
        self.runs_ = [{k: v for k, v in r.items() if k != "physicality"} for r in runs]
        self.loss_curve_ = runs[best]["curve"]
        self.n_features_in_ = X.shape[2]
        self.horizon_ = y.shape[1]
        return self

    @property
    def model_(self) -> QRNNModel:
        check_is_fitted(self, "theta_")
        return QRNNModel(self.config_, self.theta_)

    def predict(self, X):
        check_is_fitted(self, "theta_")
        X = check_window_arrays(X, n_v=self.n_features_in_)
        return self.model_.predict(X, self.horizon_)

    def predict_sequence(self, X):
        """Outputs at every time step of every window."""
        check_is_fitted(self, "theta_")
        X = check_window_arrays(X, n_v=self.n_features_in_)
        return self.model_.predict_sequence(X)

    def rmse(self, X, y) -> float:
        X, y = check_window_arrays(X, y, n_v=getattr(self, "n_features_in_", None))
        return rmse_loss(self.predict(X), y)

    def evaluate_dataset(self, dataset) -> dict:
        return evaluate(self.model_, dataset)

    def loss_gradient(self, X, y, theta=None):
        """Training loss and its parameter-shift gradient at ``theta``."""
        X, y = check_window_arrays(X, y)
        config = self._ansatz(X.shape[2])
        if theta is None:
            check_is_fitted(self, "theta_")
            theta = self.theta_
        if len(theta) != param_count(config):
            raise ShapeError("theta does not match the ansatz")
        return loss_and_gradient(X, y, theta, config, EvalBudget())

    def physical_states(self, X):
        """Hidden states after every block, (n_windows, T, N_M, N_M)."""
        check_is_fitted(self, "theta_")
        X = check_window_arrays(X, n_v=self.n_features_in_)
        return forward_batch(X, self.theta_, self.config_).hidden_states()
