"""RMSE training with multi-restart L-BFGS and four-split evaluation."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .ansatz import AnsatzConfig, param_count
from .datasets import WindowedDataset
from .derivatives import EvalBudget, finite_diff_gradient, loss_and_gradient, rmse_from_state
from .engine import BatchState, forward_batch
from .exceptions import EmptyDatasetError, InitializationError, ShapeError, TrainingFailureError
from .optim import minimize
from .tensor import HERMITIAN_TOL, PSD_TOL, TRACE_TOL

DEFAULT_G_TOL = {"a": 1e-3, "b": 1e-4, "c": 1e-4}
EXPECTATION_SLACK = 1e-10


def default_workers() -> int:
    env = os.environ.get("QRNN_WORKERS")
    if env:
        return max(1, int(env))
    if hasattr(os, "sched_getaffinity"):
        return len(os.sched_getaffinity(0)) or 1
    return os.cpu_count() or 1


@dataclass
class TrainConfig:
    g_tol: float = 1e-3
    max_iter: int = 1000
    restarts: int = 8
    gradient: str = "analytical"  # or "numerical"
    epsilon: float = 1e-8
    seed: int = 0
    workers: int | None = None
    check_physicality: bool = False

    def __post_init__(self):
        if self.gradient not in ("analytical", "numerical"):
            raise ValueError(f"gradient must be 'analytical' or 'numerical', got {self.gradient!r}")
        if self.max_iter < 1 or self.restarts < 1:
            raise ValueError("max_iter and restarts must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def rmse_loss(predictions, targets) -> float:
    """Root mean square error pooled over every (window, horizon step) pair."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ShapeError(f"predictions {p.shape} and targets {t.shape} differ in shape")
    if p.size == 0:
        raise EmptyDatasetError("cannot compute RMSE of an empty set")
    return float(np.sqrt(np.mean((p - t) ** 2)))


class PhysicalityMonitor:
    """Tracks the worst density-matrix and expectation deviations seen."""

    def __init__(self):
        self.trace = 0.0
        self.hermiticity = 0.0
        self.min_eigenvalue = np.inf
        self.max_abs_expectation = 0.0
        self.n_states = 0

    def observe(self, state: BatchState) -> None:
        rho = state.hidden_states()
        self.trace = max(self.trace, float(np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1).max()))
        self.hermiticity = max(self.hermiticity, float(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))).max()))
        herm = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
        self.min_eigenvalue = min(self.min_eigenvalue, float(np.linalg.eigvalsh(herm).min()))
        self.max_abs_expectation = max(self.max_abs_expectation, float(np.abs(state.expectations).max()))
        self.n_states += rho.shape[0] * rho.shape[1]

    def merge(self, other: "PhysicalityMonitor") -> None:
        self.trace = max(self.trace, other.trace)
        self.hermiticity = max(self.hermiticity, other.hermiticity)
        self.min_eigenvalue = min(self.min_eigenvalue, other.min_eigenvalue)
        self.max_abs_expectation = max(self.max_abs_expectation, other.max_abs_expectation)
        self.n_states += other.n_states

    @property
    def ok(self) -> bool:
        return (self.trace <= TRACE_TOL and self.hermiticity <= HERMITIAN_TOL
                and self.min_eigenvalue >= -PSD_TOL
                and self.max_abs_expectation <= 1 + EXPECTATION_SLACK)

    def as_dict(self) -> dict:
        return {"trace": self.trace, "hermiticity": self.hermiticity,
                "min_eigenvalue": self.min_eigenvalue,
                "max_abs_expectation": self.max_abs_expectation, "n_states": self.n_states}


@dataclass
class QRNNModel:
    config: AnsatzConfig
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (param_count(self.config),):
            raise ShapeError(f"theta has shape {self.theta.shape}, expected ({param_count(self.config)},)")

    def predict_sequence(self, X) -> np.ndarray:
        """Predictions at every step of each window, (B, T)."""
        return forward_batch(X, self.theta, self.config).predictions

    def predict(self, X, horizon: int = 5) -> np.ndarray:
        return self.predict_sequence(X)[:, -horizon:]

    def to_dict(self) -> dict:
        return {"ansatz": self.config.to_dict(), "theta": [float(v) for v in self.theta]}

    @classmethod
    def from_dict(cls, d: dict) -> "QRNNModel":
        return cls(AnsatzConfig.from_dict(d["ansatz"]), np.asarray(d["theta"], dtype=float))


@dataclass
class TrainingReport:
    n_it: int
    n_fev: int
    n_jev: int
    rmse_train: float
    rmse_val: float
    rmse_test: float
    rmse_full_test: float
    best_restart: int
    gradient: str
    converged: bool
    message: str
    loss_curve: list = field(default_factory=list)  # (iteration, train RMSE, validation RMSE)
    restarts: list = field(default_factory=list)
    physicality: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def table_row(self) -> dict:
        """The columns of an optimisation summary table."""
        return {"gradient": self.gradient, "n_it": self.n_it, "n_fev": self.n_fev, "n_jev": self.n_jev,
                "rmse_train": self.rmse_train, "rmse_val": self.rmse_val,
                "rmse_test": self.rmse_test, "rmse_full_test": self.rmse_full_test}


class _Objective:
    def __init__(self, X, Y, config, train_config: TrainConfig, monitor=None):
        self.X, self.Y, self.config = X, Y, config
        self.mode, self.epsilon = train_config.gradient, train_config.epsilon
        self.budget = EvalBudget()
        self.monitor = monitor
        self._last = None  # (theta, state, loss)

    def loss(self, theta):
        state = forward_batch(self.X, theta, self.config)
        self.budget.add(1, "loss")
        if self.monitor is not None:
            self.monitor.observe(state)
        loss = rmse_from_state(state, self.Y)[0]
        self._last = (np.array(theta), state, loss)
        return loss

    def grad(self, theta):
        if self._last is None or not np.array_equal(self._last[0], theta):
            self.loss(theta)
        _, state, loss = self._last
        if self.mode == "analytical":
            return loss_and_gradient(self.X, self.Y, theta, self.config, self.budget, state=state)[1]
        return finite_diff_gradient(self.X, self.Y, theta, self.config, self.epsilon, self.budget, f0=loss)


def initial_parameters(config: AnsatzConfig, rng: np.random.Generator) -> np.ndarray:
    """Angles uniform in [0, 1), bias 0."""
    theta = rng.uniform(0.0, 1.0, param_count(config))
    theta[config.bias_index] = 0.0
    return theta


def fit_single(X, Y, config: AnsatzConfig, train_config: TrainConfig, theta0,
               X_val=None, Y_val=None) -> dict:
    """One L-BFGS run from ``theta0``; returns the result and its curves."""
    monitor = PhysicalityMonitor() if train_config.check_physicality else None
    obj = _Objective(X, Y, config, train_config, monitor)
    curve = []

    def val_rmse(theta):
        if X_val is None or len(X_val) == 0:
            return float("nan")
        return rmse_from_state(forward_batch(X_val, theta, config), Y_val)[0]

    def record(k, theta, f):
        curve.append((k, float(f), val_rmse(theta)))

    theta0 = np.asarray(theta0, dtype=float)
    record(0, theta0, obj.loss(theta0))
    res = minimize(obj.loss, obj.grad, theta0, g_tol=train_config.g_tol,
                   max_iter=train_config.max_iter, callback=record)
    return {"theta": res.x, "loss": res.fun, "val_rmse": val_rmse(res.x), "n_it": res.n_it,
            "n_fev": obj.budget["loss"], "n_jev": res.n_jev, "converged": res.converged,
            "degraded": res.degraded, "message": res.message, "max_grad": float(np.max(np.abs(res.grad))),
            "curve": curve, "physicality": monitor}


def _restart_job(args):
    X, Y, Xv, Yv, config, train_config, theta0 = args
    try:
        return fit_single(X, Y, config, train_config, theta0, Xv, Yv)
    except InitializationError as exc:
        return {"error": str(exc), "degraded": True}


def run_restarts(X, Y, X_val, Y_val, config: AnsatzConfig, train_config: TrainConfig,
                 starts: list) -> list[dict]:
    """Run ``fit_single`` from every start, in worker processes when allowed."""
    jobs = [(X, Y, X_val, Y_val, config, train_config, th) for th in starts]
    workers = train_config.workers or default_workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(_restart_job, jobs))
    return [_restart_job(j) for j in jobs]


def evaluate(model: QRNNModel, dataset: WindowedDataset) -> dict:
    """RMSE on train/val/test windows and on the stride-5 full-test tiling."""
    out = {}
    for split, key in (("train", "rmse_train"), ("val", "rmse_val"), ("test", "rmse_test"),
                       ("full_test", "rmse_full_test")):
        X, Y = dataset.arrays(split)
        out[key] = rmse_loss(model.predict(X, dataset.horizon), Y) if len(X) else float("nan")
    return out


def train_multi_restart(dataset: WindowedDataset, config: AnsatzConfig,
                        train_config: TrainConfig) -> tuple[QRNNModel, TrainingReport]:
    """Independent runs from random starts; keep the lowest validation RMSE."""
    X, Y = dataset.arrays("train")
    if len(X) == 0:
        raise EmptyDatasetError("dataset has no training windows")
    Xv, Yv = dataset.arrays("val")
    seeds = np.random.SeedSequence(train_config.seed).spawn(train_config.restarts)
    starts = [initial_parameters(config, np.random.default_rng(s)) for s in seeds]
    results = run_restarts(X, Y, Xv, Yv, config, train_config, starts)

    summaries = []
    for r in results:
        summary = {k: v for k, v in r.items() if k not in ("theta", "curve", "physicality")}
        if "theta" in r:
            summary.update(evaluate(QRNNModel(config, r["theta"]), dataset))
        summaries.append(summary)
    usable = [i for i, r in enumerate(results) if "theta" in r and not r["degraded"]]
    if not usable:
        raise TrainingFailureError("every restart failed", summaries)
    key = [results[i]["val_rmse"] if len(Xv) else results[i]["loss"] for i in usable]
    best = usable[int(np.argmin(key))]  # argmin keeps the lowest index on ties
    win = results[best]
    model = QRNNModel(config, win["theta"])
    scores = evaluate(model, dataset)
    physicality = None
    if train_config.check_physicality:
        mon = PhysicalityMonitor()
        for r in results:
            if r.get("physicality") is not None:
                mon.merge(r["physicality"])
        physicality = mon.as_dict()
    report = TrainingReport(
        n_it=win["n_it"], n_fev=win["n_fev"], n_jev=win["n_jev"], best_restart=best,
        gradient=train_config.gradient, converged=win["converged"], message=win["message"],
        loss_curve=win["curve"], restarts=summaries, physicality=physicality, **scores,
    )
    return model, report
