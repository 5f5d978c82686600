"""Parameter-shift derivatives of QRNN outputs and of the training loss.

A rotation angle is shared by every circuit block, so its derivative is the
sum over blocks of ordinary two-term shift rules, each shifting the angle in
one block only. A single shifted evaluation yields the outputs at every
time step, so the outputs for all t share the same evaluations.

Every distinct full-sequence evaluation is recorded in an
:class:`EvalBudget`.
"""
from __future__ import annotations

import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

import numpy as np

from .ansatz import (
    AnsatzConfig,
    build_evolution,
    encoding_state,
    param_count,
    split_params,
)
from .engine import (
    BatchState,
    check_windows,
    forward,
    forward_batch,
    kraus_from_state,
    kraus_step,
    real_coordinates,
    observable_diag,
)
from .exceptions import EmptyDatasetError, InvalidShiftError, ShapeError

HALF_PI = np.pi / 2
ALLOWED_SHIFTS = (HALF_PI, -HALF_PI, np.pi, -np.pi)


class Shift(NamedTuple):
    block: int
    index: int
    value: float


class EvalBudget:
    """Thread-safe counter of full-sequence circuit evaluations."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: Counter = Counter()

    def add(self, n: int = 1, kind: str = "other") -> None:
        with self._lock:
            self._counts[kind] += n

    @property
    def total(self) -> int:
        with self._lock:
            return sum(self._counts.values())

    def __getitem__(self, kind: str) -> int:
        with self._lock:
            return self._counts[kind]

    def as_dict(self) -> dict:
        with self._lock:
            return dict(self._counts)

    def reset(self) -> None:
        with self._lock:
            self._counts.clear()


def _charge(budget: EvalBudget | None, n: int, kind: str) -> None:
    if budget is not None:
        budget.add(n, kind)


def parallel_map(fn: Callable, items: Iterable, workers: int | None = 1) -> list:
    """Map ``fn`` over ``items``; results come back in input order."""
    items = list(items)
    if not workers or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def validate_shifts(shifts: Iterable, config: AnsatzConfig, T: int) -> tuple[Shift, ...]:
    out = tuple(Shift(int(b), int(i), float(v)) for b, i, v in shifts)
    seen = set()
    for s in out:
        if s.index == config.bias_index:
            raise InvalidShiftError("the bias is not a rotation angle and cannot be shifted")
        if not 0 <= s.index < config.bias_index:
            raise InvalidShiftError(f"parameter index {s.index} out of range")
        if not 0 <= s.block < T:
            raise InvalidShiftError(f"block {s.block} out of range for T={T}")
        if not any(np.isclose(s.value, a, rtol=0, atol=1e-15) for a in ALLOWED_SHIFTS):
            raise InvalidShiftError(f"shift {s.value} is not one of +-pi/2, +-pi")
        if (s.block, s.index) in seen:
            raise InvalidShiftError(f"parameter {s.index} shifted twice in block {s.block}")
        seen.add((s.block, s.index))
    return out


def shifted_forward(series, theta, config: AnsatzConfig, shifts=(), budget: EvalBudget | None = None,
                    kind: str = "shifted") -> np.ndarray:
    """Expectations at every step with the listed per-block parameter offsets."""
    series = np.asarray(series, dtype=float)
    theta = np.asarray(theta, dtype=float)
    T = series.shape[0]
    shifts = validate_shifts(shifts, config, T)
    overrides: dict[int, np.ndarray] = {}
    for s in shifts:
        th = overrides.setdefault(s.block, theta.copy())
        th[s.index] += s.value
    _charge(budget, 1, kind)
    return forward(series, theta, config, block_params=overrides).expectations


def gradient_expectation(series, theta, config: AnsatzConfig, t: int, i: int,
                         budget: EvalBudget | None = None) -> float:
    """d<O>_t / d theta_i from 2(t+1) single-block shifted evaluations."""
    if i == config.bias_index:
        raise InvalidShiftError("bias derivative is analytic (d y/d b = 1), not a shift rule")
    total = 0.0
    for r in range(t + 1):
        plus = shifted_forward(series, theta, config, [(r, i, HALF_PI)], budget, "gradient")
        minus = shifted_forward(series, theta, config, [(r, i, -HALF_PI)], budget, "gradient")
        total += 0.5 * (plus[t] - minus[t])
    return float(total)


# --- batched shift evaluations ----------------------------------------------

def _variant_thetas(state: BatchState, indices: np.ndarray, shift: float) -> np.ndarray:
    idx = np.concatenate([indices, indices])
    var = np.broadcast_to(state.theta, (len(idx), len(state.theta))).copy()
    var[np.arange(len(idx)), idx] += np.repeat([shift, -shift], len(indices))
    return var


def _block_variants(state: BatchState, r: int, indices: np.ndarray, shift: float) -> np.ndarray:
    """Kraus operators of block ``r`` for each parameter in ``indices`` shifted
    by ``+shift`` then ``-shift``. Shape (2*len(indices), B, N_E, N_M, N_M)."""
    cfg = state.config
    key = ("variants", indices.tobytes(), shift)
    if key not in state._cache:
        var = _variant_thetas(state, indices, shift)
        alpha, beta, _ = split_params(var, cfg)
        is_enc = np.concatenate([indices, indices]) < cfg.n_alpha
        # evolution shifts give the same W in every block
        W = build_evolution(beta[~is_enc], cfg) if (~is_enc).any() else None
        state._cache[key] = (is_enc, alpha[is_enc], W)
    is_enc, alpha, W = state._cache[key]
    B = state.X.shape[0]
    K = np.empty((len(is_enc), B) + state.K.shape[2:], dtype=complex)
    if is_enc.any():
        v = encoding_state(state.X[None, :, r, :], alpha[:, None, :], cfg)
        K[is_enc] = kraus_from_state(v, state.W, cfg)
    if W is not None:
        K[~is_enc] = kraus_from_state(state.v[None, :, r], W[:, None], cfg)
    return K


def shifted_block_expectations(state: BatchState, r: int, indices=None,
                               budget: EvalBudget | None = None, kind: str = "gradient",
                               shift: float = HALF_PI) -> np.ndarray:
    """Outputs of the circuits where one angle is shifted in block ``r`` only.

    Returns shape (2, P, B, T): axis 0 is the +shift / -shift pair, P runs
    over ``indices`` (all angles by default). Blocks before ``r`` are reused
    from the unshifted pass, which they equal exactly; blocks after ``r``
    propagate in real Hermitian coordinates.
    """
    cfg = state.config
    if indices is None:
        indices = np.arange(cfg.n_angles)
    indices = np.asarray(indices, dtype=int)
    if np.any(indices == cfg.bias_index):
        raise InvalidShiftError("the bias cannot be shifted")
    P = len(indices)
    B, T = state.expectations.shape
    K = _block_variants(state, r, indices, shift)
    V = K.shape[0]
    out = np.empty((V, B, T))
    out[:, :, :r] = state.expectations[None, :, :r]
    rho, out[:, :, r] = kraus_step(K, state.rho_in[None, :, r], observable_diag(cfg.n_E))
    if r + 1 < T:
        S, o = state.real_channel()
        vec = np.ascontiguousarray(real_coordinates(rho).transpose(1, 2, 0))  # (B, n^2, V)
        o = o[:, :, None, :]
        for t in range(r + 1, T):
            out[:, :, t] = (o[:, t] @ vec)[:, 0, :].T
            if t + 1 < T:
                vec = S[:, t] @ vec
    _charge(budget, V, kind)
    return out.reshape(2, P, B, T)


def jacobian_batch(state: BatchState, budget: EvalBudget | None = None, workers: int | None = 1,
                   flip_sign: Iterable[int] = ()) -> np.ndarray:
    """d<O>_t/d theta_i for every window, step and angle: shape (B, T, N_angle).

    ``flip_sign`` negates the shift for the given angle indices; it exists
    only as a fault-injection hook for verification tooling.
    """
    T = state.expectations.shape[1]
    diffs = parallel_map(
        lambda r: shifted_block_expectations(state, r, budget=budget), range(T), workers
    )
    J = 0.5 * sum(d[0] - d[1] for d in diffs)  # (P, B, T)
    for k in flip_sign:
        J[k] = -J[k]
    return np.transpose(J, (1, 2, 0))


def jacobian_expectation(series, theta, config: AnsatzConfig, budget: EvalBudget | None = None,
                         workers: int | None = 1, flip_sign: Iterable[int] = ()) -> np.ndarray:
    """Gradient of ``<O>_t`` for all t and all angles of one series, (T, N_angle)."""
    series = np.asarray(series, dtype=float)
    state = forward_batch(series[None], theta, config)
    _charge(budget, 1, "loss")
    return jacobian_batch(state, budget, workers, flip_sign)[0]


# --- loss -------------------------------------------------------------------

def _check_targets(X, Y, config: AnsatzConfig):
    X = check_windows(X, config)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] == 0:
        raise EmptyDatasetError("no training windows")
    if Y.shape[0] != X.shape[0] or Y.shape[1] > X.shape[1]:
        raise ShapeError(f"targets {Y.shape} do not fit windows {X.shape}")
    return X, Y


def rmse_from_state(state: BatchState, Y: np.ndarray) -> tuple[float, np.ndarray]:
    H = Y.shape[1]
    residuals = state.predictions[:, -H:] - Y
    return float(np.sqrt(np.mean(residuals**2))), residuals


def loss_value(X, Y, theta, config: AnsatzConfig, budget: EvalBudget | None = None) -> float:
    """RMSE over the last ``Y.shape[1]`` outputs of every window."""
    X, Y = _check_targets(X, Y, config)
    _charge(budget, 1, "loss")
    return rmse_from_state(forward_batch(X, theta, config), Y)[0]


def loss_and_gradient(X, Y, theta, config: AnsatzConfig, budget: EvalBudget | None = None,
                      workers: int | None = 1, state: BatchState | None = None):
    """RMSE loss and its exact gradient.

    Angle components use the batched shift rule: 2*T*N_angle evaluations,
    each covering all windows. The bias enters affinely and is
    differentiated directly.
    """
    X, Y = _check_targets(X, Y, config)
    theta = np.asarray(theta, dtype=float)
    if state is None:
        state = forward_batch(X, theta, config)
        _charge(budget, 1, "loss")
    loss, res = rmse_from_state(state, Y)
    grad = np.zeros(param_count(config))
    if loss == 0.0:
        return loss, grad
    H = Y.shape[1]
    weights = res / (loss * res.size)  # d loss / d prediction
    T = X.shape[1]

    def block(r):
        out = shifted_block_expectations(state, r, budget=budget)
        return 0.5 * np.einsum("pbt,bt->p", out[0, :, :, -H:] - out[1, :, :, -H:], weights)

    grad[: config.n_angles] = sum(parallel_map(block, range(T), workers))
    grad[config.bias_index] = weights.sum()
    return loss, grad


def gradient_loss(X, Y, theta, config: AnsatzConfig, budget: EvalBudget | None = None,
                  workers: int | None = 1) -> np.ndarray:
    return loss_and_gradient(X, Y, theta, config, budget, workers)[1]


def finite_diff_gradient(X, Y, theta, config: AnsatzConfig, epsilon: float = 1e-8,
                         budget: EvalBudget | None = None, f0: float | None = None) -> np.ndarray:
    """Forward-difference loss gradient, one shared baseline evaluation."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    theta = np.asarray(theta, dtype=float)
    if f0 is None:
        f0 = loss_value(X, Y, theta, config, budget)
    grad = np.empty_like(theta)
    for k in range(len(theta)):
        th = theta.copy()
        th[k] += epsilon
        grad[k] = (loss_value(X, Y, th, config, budget) - f0) / epsilon
    return grad


# --- second order -----------------------------------------------------------

class _CircuitCache:
    """Memoises shifted evaluations keyed by their (unordered) shift set."""

    def __init__(self, series, theta, config, budget):
        self.series, self.theta, self.config, self.budget = series, theta, config, budget
        self._store: dict = {}

    def __call__(self, *shifts) -> np.ndarray:
        key = tuple(sorted(shifts))
        if key not in self._store:
            self._store[key] = shifted_forward(
                self.series, self.theta, self.config, key, self.budget, "hessian"
            )
        return self._store[key]

    def __len__(self):
        return len(self._store)


def _hessian(series, theta, config: AnsatzConfig, t_max: int, budget, reduced: bool = True,
             indices=None):
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    theta = np.asarray(theta, dtype=float)
    idx = np.arange(config.n_angles) if indices is None else np.asarray(indices, dtype=int)
    validate_shifts([(0, int(i), HALF_PI) for i in idx], config, series.shape[0])
    n = len(idx)
    T = t_max + 1
    ev = _CircuitCache(series, theta, config, budget)
    base = ev()
    H = np.zeros((T, n, n))
    h = HALF_PI
    for a, i in enumerate(idx):
        for b in range(a + 1, n):
            j = idx[b]
            # entry for t only sums blocks r, s <= t
            for t in range(T):
                val = 0.0
                for r in range(t + 1):
                    for s in range(t + 1):
                        val += (ev((r, i, h), (s, j, h))[t] + ev((r, i, -h), (s, j, -h))[t]
                                - ev((r, i, h), (s, j, -h))[t] - ev((r, i, -h), (s, j, h))[t])
                H[t, a, b] = H[t, b, a] = 0.25 * val
        for t in range(T):
            H[t, a, a] = _hessian_diag(ev, base, i, t, reduced)
    return H, len(ev)


def _hessian_diag(ev, base, i: int, t: int, reduced: bool) -> float:
    h = HALF_PI
    if reduced:
        val = 0.0
        for r in range(t + 1):
            for s in range(r):
                val += 0.5 * (ev((r, i, h), (s, i, h))[t] + ev((r, i, -h), (s, i, -h))[t]
                              - ev((r, i, h), (s, i, -h))[t] - ev((r, i, -h), (s, i, h))[t])
            val += 0.25 * (ev((r, i, np.pi))[t] + ev((r, i, -np.pi))[t])
        return val - 0.5 * (t + 1) * base[t]
    # full double sum; equal blocks merge into one +-pi shift or cancel
    val = 0.0
    for r in range(t + 1):
        for s in range(t + 1):
            if r == s:
                val += ev((r, i, np.pi))[t] + ev((r, i, -np.pi))[t] - 2 * base[t]
            else:
                val += (ev((r, i, h), (s, i, h))[t] + ev((r, i, -h), (s, i, -h))[t]
                        - ev((r, i, h), (s, i, -h))[t] - ev((r, i, -h), (s, i, h))[t])
    return 0.25 * val


def hessian_expectation(series, theta, config: AnsatzConfig, t: int,
                        budget: EvalBudget | None = None, reduced: bool = True) -> np.ndarray:
    """Second derivatives of ``<O>_t`` over the rotation angles, (N_angle, N_angle)."""
    H, _ = _hessian(series, theta, config, t, budget, reduced)
    return H[t]


def hessian_all(series, theta, config: AnsatzConfig, budget: EvalBudget | None = None,
                reduced: bool = True, indices=None) -> tuple[np.ndarray, int]:
    """Hessians of ``<O>_t`` for every t, sharing circuits across t and i<->j.

    Returns ``(H, n_circuits)`` with H of shape (T, k, k) and the number of
    distinct circuits evaluated. ``indices`` restricts the Hessian to a subset
    of k angles (default: all N_angle).
    """
    series = np.asarray(series, dtype=float)
    return _hessian(series, theta, config, series.shape[0] - 1, budget, reduced, indices)


def eval_count_gradient(T: int, n_theta: int) -> int:
    return 2 * T * n_theta


def eval_count_hessian(T: int, n_theta: int) -> int:
    return 2 * n_theta**2 * T**2 + 1


def central_difference(f: Callable, theta, h: float) -> np.ndarray:
    """Central differences of a vector- or scalar-valued ``f``; the derivative
    axis is appended last."""
    theta = np.asarray(theta, dtype=float)
    cols = []
    for k in range(len(theta)):
        e = np.zeros_like(theta)
        e[k] = h
        cols.append((np.asarray(f(theta + e)) - np.asarray(f(theta - e))) / (2 * h))
    return np.stack(cols, axis=-1)
