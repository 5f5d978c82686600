"""Density-matrix emulation of the QRNN forward pass.

Each time step resets register E, encodes the input with V(x), applies the
shared evolution W and measures E non-selectively. The hidden state is the
reduced density matrix of register M.

Three paths compute the same numbers:

* :func:`step` / :func:`forward` -- the split-operator form: W is cut into
  row blocks W^i and the reduced state and the expectation both come from
  the partial products ``W^i sigma W^i^dagger``.
* :func:`step_naive` -- builds the full joint density matrix; used as an
  oracle.
* :func:`forward_batch` -- many windows at once, with the per-step map
  written as Kraus operators ``K_i = W^i (V|0> ⊗ I)``. This is what the
  trainer and the derivative code use.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .ansatz import (
    AnsatzConfig,
    build_encoding,
    build_evolution,
    encoding_state,
    split_params,
    split_w_blocks,
)
from .exceptions import DegenerateDistributionError, ShapeError
from .tensor import check_density_matrix, expectation_diag, partial_trace_E, pure_state

PROB_FLOOR = 1e-15


def observable_diag(n_E: int) -> np.ndarray:
    """Eigenvalues of Z^{⊗n_E} on the computational basis: (-1)^popcount(i)."""
    if n_E < 1:
        raise ValueError("n_E must be >= 1")
    return np.array([(-1.0) ** bin(i).count("1") for i in range(2**n_E)])


def initial_hidden_state(config: AnsatzConfig) -> np.ndarray:
    return pure_state(0, 2**config.n_M)


def _check_inputs(series, config: AnsatzConfig) -> np.ndarray:
    series = np.asarray(series, dtype=float)
    if series.ndim == 1 and config.n_v == 1:
        series = series[:, None]
    if series.ndim != 2 or series.shape[1] != config.n_v:
        raise ShapeError(f"series has shape {series.shape}, expected (T, {config.n_v})")
    if series.shape[0] < 1:
        raise ShapeError("series needs at least one time step")
    return series


def step(rho_M, x, theta, config: AnsatzConfig, w_blocks=None):
    """One circuit block. Returns ``(rho_M_next, <O>)``.

    ``w_blocks`` are the precomputed row blocks of W; they are rebuilt from
    ``theta`` when omitted.
    """
    split = config.split
    rho_M = np.asarray(rho_M)
    if rho_M.shape != (split.N_M, split.N_M):
        raise ShapeError(f"hidden state has shape {rho_M.shape}, expected {(split.N_M,) * 2}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    alpha, beta, _ = split_params(theta, config)
    if w_blocks is None:
        w_blocks = split_w_blocks(build_evolution(beta, config), split)
    v = build_encoding(x, alpha, config)[:, 0]
    sigma = np.kron(np.outer(v, v.conj()), rho_M)
    d = observable_diag(config.n_E)
    rho_next = np.zeros_like(rho_M, dtype=complex)
    expectation = 0.0
    for i, Wi in enumerate(w_blocks):
        Mi = Wi @ sigma @ Wi.conj().T
        rho_next += Mi
        expectation += d[i] * np.trace(Mi).real
    return rho_next, float(expectation)


def step_naive(rho_M, x, theta, config: AnsatzConfig):
    """Reference block: full ``U = W (V ⊗ I)`` acting on the joint state."""
    split = config.split
    x = np.atleast_1d(np.asarray(x, dtype=float))
    alpha, beta, _ = split_params(theta, config)
    V = build_encoding(x, alpha, config)
    W = build_evolution(beta, config)
    U = W @ np.kron(V, np.eye(split.N_M))
    rho_E = pure_state(0, split.N_E)
    rho = U @ np.kron(rho_E, np.asarray(rho_M)) @ U.conj().T
    d = np.kron(observable_diag(config.n_E), np.ones(split.N_M))
    return partial_trace_E(rho, split), expectation_diag(rho, d)


@dataclass
class ForwardTrace:
    hidden_states: np.ndarray  # (T, N_M, N_M), state after each block
    expectations: np.ndarray  # (T,)
    predictions: np.ndarray  # (T,)
    bias: float = 0.0

    def __len__(self):
        return len(self.expectations)


def forward(series, theta, config: AnsatzConfig, block_params=None, check: bool = False) -> ForwardTrace:
    """Run the QRNN over a (T, n_v) input sequence from the all-zero state.

    ``block_params`` optionally maps a block index to a full parameter vector
    used only inside that block (shifted evaluations); every other block uses
    ``theta``. With ``check=True`` each hidden state is validated.
    """
    series = _check_inputs(series, config)
    theta = np.asarray(theta, dtype=float)
    _, beta, bias = split_params(theta, config)
    blocks = split_w_blocks(build_evolution(beta, config), config.split)
    block_params = block_params or {}
    rho = initial_hidden_state(config)
    T = series.shape[0]
    states = np.empty((T,) + rho.shape, dtype=complex)
    expect = np.empty(T)
    for t in range(T):
        if t in block_params:
            th = np.asarray(block_params[t], dtype=float)
            rho, expect[t] = step(rho, series[t], th, config)
        else:
            rho, expect[t] = step(rho, series[t], theta, config, blocks)
        if check:
            check_density_matrix(rho)
        states[t] = rho
    return ForwardTrace(states, expect, expect + float(bias), float(bias))


# --- batched Kraus form -----------------------------------------------------

def kraus_from_state(v: np.ndarray, W: np.ndarray, config: AnsatzConfig) -> np.ndarray:
    """Kraus operators ``K_i[m, q] = sum_k W[(i, m), (k, q)] v_k``.

    ``v`` is (..., N_E), ``W`` is (..., N, N); output is (..., N_E, N_M, N_M).
    """
    N_E, N_M = 2**config.n_E, 2**config.n_M
    # move the contracted E index of W last so the product is a plain matmul
    Wt = W.reshape(W.shape[:-2] + (N_E, N_M, N_E, N_M)).swapaxes(-1, -2)
    Wt = Wt.reshape(W.shape[:-2] + (N_E * N_M * N_M, N_E))
    if W.ndim == 2:
        K = v @ Wt.T
        return K.reshape(v.shape[:-1] + (N_E, N_M, N_M))
    if v.ndim == W.ndim and v.shape[0] == 1 and W.shape[1] == 1:
        # (V, 1, N, N) evolutions against (1, B, N_E) states
        K = Wt[:, 0] @ v[0].T  # (V, N_E*N_M*N_M, B)
        return np.moveaxis(K, -1, 1).reshape((W.shape[0], v.shape[1], N_E, N_M, N_M))
    return np.einsum("...k,...imkq->...imq", v, Wt.reshape(W.shape[:-2] + (N_E, N_M, N_M, N_E)).swapaxes(-1, -2))


def apply_kraus(K: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``sum_i K_i rho K_i^dagger`` with K (..., N_E, N_M, N_M), rho (..., N_M, N_M)."""
    return kraus_step(K, rho, np.zeros(K.shape[-3]))[0]


def kraus_step(K: np.ndarray, rho: np.ndarray, d: np.ndarray):
    """Next hidden state and ``<O>`` from the partial matrices ``K_i rho K_i^dagger``.

    The state is their sum, the expectation their traces weighted by ``d``.
    """
    N_E, N_M = K.shape[-3], K.shape[-1]
    lead = np.broadcast_shapes(K.shape[:-3], rho.shape[:-2])
    tmp = (K.reshape(K.shape[:-3] + (N_E * N_M, N_M)) @ rho).reshape(lead + (N_E, N_M, N_M))
    Kc = K.conj()
    expect = (tmp * Kc).sum(axis=(-1, -2)).real @ d
    a = np.swapaxes(tmp, -3, -2).reshape(lead + (N_M, N_E * N_M))
    b = np.swapaxes(Kc, -3, -2).reshape(K.shape[:-3] + (N_M, N_E * N_M))
    return a @ np.swapaxes(b, -1, -2), expect


def kraus_observable(K: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Matrix ``D = sum_i d_i K_i^dagger K_i`` so that ``<O> = Tr(rho D)``."""
    KhK = np.conj(np.swapaxes(K, -1, -2)) @ K
    return np.tensordot(d, np.moveaxis(KhK, -3, 0), axes=1)


def superoperator(K: np.ndarray) -> np.ndarray:
    """Row-major vectorised channel ``sum_i K_i ⊗ conj(K_i)``."""
    n = K.shape[-1]
    S = np.einsum("...iac,...ibd->...abcd", K, K.conj(), optimize=True)
    return S.reshape(K.shape[:-3] + (n * n, n * n))


@lru_cache(maxsize=None)
def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal Hermitian basis of n x n matrices as columns of a unitary
    (n^2, n^2) matrix of row-major vectorisations.

    Coordinates of a Hermitian matrix in this basis are real, so channels
    become real matrices of the same size.
    """
    cols = []
    for a in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[a, a] = 1.0
        cols.append(e.ravel())
    for a in range(n):
        for b in range(a + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[a, b] = e[b, a] = 1 / np.sqrt(2)
            cols.append(e.ravel())
            e = np.zeros((n, n), dtype=complex)
            e[a, b], e[b, a] = 1j / np.sqrt(2), -1j / np.sqrt(2)
            cols.append(e.ravel())
    return np.array(cols).T


def real_coordinates(rho: np.ndarray) -> np.ndarray:
    """Real coordinates (..., n^2) of Hermitian matrices (..., n, n)."""
    n = rho.shape[-1]
    return (rho.reshape(rho.shape[:-2] + (n * n,)) @ hermitian_basis(n).conj()).real


@dataclass
class BatchState:
    """Unshifted pass over a batch of windows, kept for reuse by shifted passes."""

    config: AnsatzConfig
    X: np.ndarray  # (B, T, n_v)
    theta: np.ndarray
    W: np.ndarray
    v: np.ndarray  # (B, T, N_E) encoded register-E states
    K: np.ndarray  # (B, T, N_E, N_M, N_M)
    rho_in: np.ndarray  # (B, T, N_M, N_M) hidden state entering each block
    expectations: np.ndarray  # (B, T)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def bias(self) -> float:
        return float(self.theta[self.config.bias_index])

    @property
    def predictions(self) -> np.ndarray:
        return self.expectations + self.bias

    def hidden_states(self) -> np.ndarray:
        """Hidden state after every block, (B, T, N_M, N_M)."""
        last = apply_kraus(self.K[:, -1], self.rho_in[:, -1])
        return np.concatenate([self.rho_in[:, 1:], last[:, None]], axis=1)

    def real_channel(self):
        """Per-block channel and observable in real Hermitian coordinates:
        ``(S, o)`` with S (B, T, n^2, n^2) and o (B, T, n^2)."""
        if "channel" not in self._cache:
            n = self.K.shape[-1]
            basis = hermitian_basis(n)
            S = np.ascontiguousarray((basis.conj().T @ superoperator(self.K) @ basis).real)
            D = kraus_observable(self.K, observable_diag(self.config.n_E))
            o = np.ascontiguousarray((np.swapaxes(D, -1, -2).reshape(D.shape[:-2] + (n * n,)) @ basis).real)
            self._cache["channel"] = (S, o)
        return self._cache["channel"]


def check_windows(X, config: AnsatzConfig) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and config.n_v == 1:
        X = X[..., None]
    if X.ndim != 3 or X.shape[2] != config.n_v:
        raise ShapeError(f"windows have shape {X.shape}, expected (B, T, {config.n_v})")
    if X.shape[1] < 1:
        raise ShapeError("windows need at least one time step")
    return X


def forward_batch(X, theta, config: AnsatzConfig) -> BatchState:
    """Exact forward pass over a (B, T, n_v) stack of independent windows."""
    X = check_windows(X, config)
    theta = np.asarray(theta, dtype=float)
    alpha, beta, _ = split_params(theta, config)
    W = build_evolution(beta, config)
    v = encoding_state(X, alpha, config)
    K = kraus_from_state(v, W, config)
    d = observable_diag(config.n_E)
    N_M = 2**config.n_M
    B, T = X.shape[:2]
    rho = np.broadcast_to(initial_hidden_state(config), (B, N_M, N_M)).copy()
    rho_in = np.empty((B, T, N_M, N_M), dtype=complex)
    expect = np.empty((B, T))
    for t in range(T):
        rho_in[:, t] = rho
        rho, expect[:, t] = kraus_step(K[:, t], rho, d)
    return BatchState(config, X, theta, W, v, K, rho_in, expect)


# --- sampling ---------------------------------------------------------------

@dataclass
class SampleResult:
    frequencies: np.ndarray  # (T, N_E) outcome frequencies
    expectations: np.ndarray  # (T,) mean of sampled eigenvalues
    std_errors: np.ndarray  # (T,) standard error of the mean


def sample_trajectory(series, theta, config: AnsatzConfig, shots: int, seed: int,
                      chunk: int = 20000) -> SampleResult:
    """Shot-by-shot emulation with selective measurement of register E.

    Each shot draws an outcome per block from ``p_i = Tr M_i`` and continues
    from the conditioned memory state ``M_i / p_i``. Deterministic for a
    given ``seed``.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    series = _check_inputs(series, config)
    theta = np.asarray(theta, dtype=float)
    alpha, beta, _ = split_params(theta, config)
    W = build_evolution(beta, config)
    K_t = kraus_from_state(encoding_state(series, alpha, config), W, config)  # (T, N_E, N_M, N_M)
    d = observable_diag(config.n_E)
    T, N_E = series.shape[0], 2**config.n_E
    N_M = 2**config.n_M
    rng = np.random.default_rng(seed)
    counts = np.zeros((T, N_E), dtype=np.int64)
    done = 0
    while done < shots:
        n = min(chunk, shots - done)
        rho = np.broadcast_to(initial_hidden_state(config), (n, N_M, N_M)).copy()
        for t in range(T):
            K = K_t[t]
            M = np.einsum("iab,sbc,idc->siad", K, rho, K.conj(), optimize=True)
            p = np.einsum("siaa->si", M).real
            if np.any(p.max(axis=1) < PROB_FLOOR):
                raise DegenerateDistributionError(f"all outcome probabilities vanish at block {t}")
            p = np.clip(p, 0.0, None)
            total = p.sum(axis=1)
            if np.max(np.abs(total - 1.0)) > 1e-12:
                raise ValueError(f"outcome probabilities sum to {total.min()}..{total.max()} at block {t}")
            cdf = np.cumsum(p / total[:, None], axis=1)
            u = rng.random(n)[:, None]
            outcome = np.minimum((u >= cdf).sum(axis=1), N_E - 1)
            counts[t] += np.bincount(outcome, minlength=N_E)
            chosen = M[np.arange(n), outcome]
            rho = chosen / p[np.arange(n), outcome][:, None, None]
        done += n
    freqs = counts / shots
    means = freqs @ d
    var = np.clip(freqs @ (d**2) - means**2, 0.0, None)
    return SampleResult(freqs, means, np.sqrt(var / shots))
