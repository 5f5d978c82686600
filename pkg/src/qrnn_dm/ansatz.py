"""Hardware-efficient QRNN ansatz: data re-uploading encoding on register E
and an E-M entangling evolution block.

Rotations use the half-angle convention ``R_a(t) = exp(-i t/2 sigma_a)`` so
that +-pi/2 parameter shifts give exact derivatives. Qubit 0 is the most
significant bit of the joint basis index; E qubits come before M qubits.
All builders broadcast over leading batch axes of their angle arguments.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import ShapeError
from .tensor import RegisterSplit


@dataclass(frozen=True)
class AnsatzConfig:
    n_E: int
    n_M: int
    L: int
    R: int
    n_v: int = 1

    def __post_init__(self):
        if self.n_E < 1 or self.n_M < 1:
            raise ValueError("n_E and n_M must be >= 1")
        if self.L < 0 or self.R < 0:
            raise ValueError("L and R must be >= 0")
        if not 1 <= self.n_v <= self.n_E:
            raise ValueError(f"need 1 <= n_v <= n_E, got n_v={self.n_v}, n_E={self.n_E}")

    @property
    def n(self) -> int:
        return self.n_E + self.n_M

    @property
    def split(self) -> RegisterSplit:
        return RegisterSplit(self.n_E, self.n_M)

    @property
    def n_params(self) -> int:
        return param_count(self)

    @property
    def n_angles(self) -> int:
        return param_count(self) - 1

    @property
    def n_alpha(self) -> int:
        return 3 * self.n_E * self.R

    @property
    def n_beta(self) -> int:
        return 3 * self.n * self.L + 3 * self.n_E

    @property
    def bias_index(self) -> int:
        return self.n_alpha + self.n_beta

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AnsatzConfig":
        return cls(**{k: int(d[k]) for k in ("n_E", "n_M", "L", "R", "n_v") if k in d})


# Circuit shapes used for the three benchmark series.
CASE_CONFIGS = {
    "a": AnsatzConfig(n_E=1, n_M=2, L=2, R=3, n_v=1),
    "b": AnsatzConfig(n_E=2, n_M=3, L=2, R=1, n_v=1),
    "c": AnsatzConfig(n_E=2, n_M=3, L=5, R=3, n_v=2),
}


def param_count(config: AnsatzConfig) -> int:
    """Trainable parameters: encoding U3 columns, evolution layers, the final
    E column and the output bias."""
    n = config.n_E + config.n_M
    return 3 * config.n_E * config.R + 3 * n * config.L + 3 * config.n_E + 1


class ParamSlot(NamedTuple):
    role: str  # "encoding" | "evolution" | "final" | "bias"
    block: int  # repetition r (encoding) or layer l (evolution); -1 otherwise
    qubit: int
    angle: int  # slot in the U3 triple (theta, phi, lambda)


def parameter_layout(config: AnsatzConfig) -> list[ParamSlot]:
    """Gate location of every flat parameter index."""
    slots = []
    for r in range(config.R):
        for q in range(config.n_E):
            for k in range(3):
                slots.append(ParamSlot("encoding", r, q, k))
    for layer in range(config.L):
        for q in range(config.n):
            for k in range(3):
                slots.append(ParamSlot("evolution", layer, q, k))
    for q in range(config.n_E):
        for k in range(3):
            slots.append(ParamSlot("final", -1, q, k))
    slots.append(ParamSlot("bias", -1, -1, -1))
    return slots


def split_params(theta, config: AnsatzConfig):
    """Return ``(alpha, beta, bias)`` views of a flat parameter vector."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != param_count(config):
        raise ShapeError(
            f"parameter vector has length {theta.shape[-1]}, expected {param_count(config)}"
        )
    a, b = config.n_alpha, config.bias_index
    return theta[..., :a], theta[..., a:b], theta[..., b]


# --- single-qubit gates -----------------------------------------------------

_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def rotation_gate(axis: str, angle) -> np.ndarray:
    """``exp(-i angle/2 sigma_axis)``; ``angle`` may be an array of angles."""
    axis = axis.upper()
    if axis not in _PAULI:
        raise ValueError(f"unknown rotation axis {axis!r}")
    angle = np.asarray(angle, dtype=float)
    c = np.cos(angle / 2)[..., None, None]
    s = np.sin(angle / 2)[..., None, None]
    return c * np.eye(2) - 1j * s * _PAULI[axis]


def _ry(angle) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    out = np.empty(angle.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def u3_gate(t1, t2, t3) -> np.ndarray:
    """``Rz(t2) @ Ry(t1) @ Rz(t3)``, built from the rotation primitives."""
    return rotation_gate("Z", t2) @ _ry(t1) @ rotation_gate("Z", t3)


def _u3_from_triples(angles: np.ndarray) -> np.ndarray:
    return u3_gate(angles[..., 0], angles[..., 1], angles[..., 2])


def kron_all(mats: np.ndarray) -> np.ndarray:
    """Kronecker product over axis -3 of a (..., n, 2, 2) stack, qubit 0 first."""
    out = mats[..., 0, :, :]
    for q in range(1, mats.shape[-3]):
        m = mats[..., q, :, :]
        d = out.shape[-1] * 2
        out = np.einsum("...ab,...cd->...acbd", out, m).reshape(out.shape[:-2] + (d, d))
    return out


# --- encoding ---------------------------------------------------------------

def variable_map(config: AnsatzConfig) -> np.ndarray:
    """Input variable uploaded on each E qubit; extra qubits repeat the last one."""
    return np.minimum(np.arange(config.n_E), config.n_v - 1)


def _upload_column(x: np.ndarray, config: AnsatzConfig) -> np.ndarray:
    return kron_all(_ry(x[..., variable_map(config)]))


def build_encoding(x, alpha, config: AnsatzConfig) -> np.ndarray:
    """Encoding unitary V(x, alpha) on register E with R+1 data uploads.

    ``x`` has trailing length n_v, ``alpha`` trailing length 3*n_E*R; leading
    axes broadcast against each other.
    """
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if x.shape[-1:] != (config.n_v,):
        raise ShapeError(f"input vector has shape {x.shape}, expected (..., {config.n_v})")
    if alpha.shape[-1:] != (config.n_alpha,):
        raise ShapeError(f"encoding angles have shape {alpha.shape}, expected (..., {config.n_alpha})")
    upload = _upload_column(x, config)
    if config.R == 0:
        return upload
    cols = _u3_from_triples(alpha.reshape(alpha.shape[:-1] + (config.R, config.n_E, 3)))
    V = upload
    for r in range(config.R):
        V = upload @ kron_all(cols[..., r, :, :, :]) @ V
    return V


def encoding_state(x, alpha, config: AnsatzConfig) -> np.ndarray:
    """``V(x, alpha)|0>``, the first column of the encoding unitary."""
    return build_encoding(x, alpha, config)[..., :, 0]


# --- evolution --------------------------------------------------------------

def cz_pair_diag(config: AnsatzConfig, e: int, m: int) -> np.ndarray:
    """Diagonal of the CZ between E-qubit ``e`` and M-qubit ``m``."""
    idx = np.arange(2 ** config.n)
    be = (idx >> (config.n - 1 - e)) & 1
    bm = (idx >> (config.n_M - 1 - m)) & 1
    return np.where(be & bm, -1.0, 1.0)


def cz_all_diag(config: AnsatzConfig) -> np.ndarray:
    """Diagonal of the product of CZs over every (E, M) qubit pair."""
    N_M = 2 ** config.n_M
    idx = np.arange(2 ** config.n)
    pop_e = np.array([bin(i).count("1") for i in idx // N_M])
    pop_m = np.array([bin(q).count("1") for q in idx % N_M])
    return np.where((pop_e * pop_m) % 2, -1.0, 1.0)


def build_evolution(beta, config: AnsatzConfig) -> np.ndarray:
    """Evolution unitary W(beta): L layers of (U3 column, all E-M CZs), then a
    final U3 column on E."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1:] != (config.n_beta,):
        raise ShapeError(f"evolution angles have shape {beta.shape}, expected (..., {config.n_beta})")
    n, N = config.n, 2 ** config.n
    batch = beta.shape[:-1]
    layers = _u3_from_triples(beta[..., : 3 * n * config.L].reshape(batch + (config.L, n, 3)))
    cz = cz_all_diag(config)[:, None]
    W = np.broadcast_to(np.eye(N, dtype=complex), batch + (N, N))
    for layer in range(config.L):
        W = cz * (kron_all(layers[..., layer, :, :, :]) @ W)
    final = _u3_from_triples(beta[..., 3 * n * config.L:].reshape(batch + (config.n_E, 3)))
    final_E = kron_all(final)
    N_M = 2 ** config.n_M
    # (F ⊗ I_M) @ W without building the Kronecker product
    W4 = W.reshape(batch + (final_E.shape[-1], N_M, N))
    W = np.einsum("...ik,...kmn->...imn", final_E, W4).reshape(batch + (N, N))
    return W


def split_w_blocks(W: np.ndarray, split: RegisterSplit) -> list[np.ndarray]:
    """Row blocks W^i (N_M x N), one per computational state i of register E."""
    W = np.asarray(W)
    if W.shape != (split.N, split.N):
        raise ShapeError(f"W has shape {W.shape}, expected ({split.N}, {split.N})")
    return [W[i * split.N_M:(i + 1) * split.N_M, :] for i in range(split.N_E)]
