"""Dense complex linear algebra over the exchange/memory register split.

Joint basis index convention: ``i * N_M + q`` where ``i`` labels the
exchange register E and ``q`` the memory register M.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
IMAG_TOL = 1e-12


@dataclass(frozen=True)
class RegisterSplit:
    n_E: int
    n_M: int

    def __post_init__(self):
        if self.n_E < 1 or self.n_M < 1:
            raise ValueError("both registers need at least one qubit")

    @property
    def N_E(self) -> int:
        return 2**self.n_E

    @property
    def N_M(self) -> int:
        return 2**self.n_M

    @property
    def N(self) -> int:
        return self.N_E * self.N_M


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product; the first factor indexes the slow (outer) axis."""
    return np.kron(np.asarray(a), np.asarray(b))


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(np.asarray(a), -1, -2))


def _check_joint(rho: np.ndarray, split: RegisterSplit) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.shape[-2:] != (split.N, split.N):
        raise ShapeError(
            f"density matrix of shape {rho.shape[-2:]} does not match "
            f"N_E*N_M = {split.N}"
        )
    return rho


def partial_trace_E(rho: np.ndarray, split: RegisterSplit) -> np.ndarray:
    """Trace out register E, leaving the N_M x N_M reduced matrix."""
    rho = _check_joint(rho, split)
    r = rho.reshape(rho.shape[:-2] + (split.N_E, split.N_M, split.N_E, split.N_M))
    return np.einsum("...iqir->...qr", r)


def partial_trace_M(rho: np.ndarray, split: RegisterSplit) -> np.ndarray:
    """Trace out register M, leaving the N_E x N_E reduced matrix."""
    rho = _check_joint(rho, split)
    r = rho.reshape(rho.shape[:-2] + (split.N_E, split.N_M, split.N_E, split.N_M))
    return np.einsum("...iqjq->...ij", r)


def expectation_diag(rho: np.ndarray, d) -> float:
    """Expectation of the diagonal observable ``diag(d)`` in state ``rho``."""
    rho = np.asarray(rho)
    d = np.asarray(d, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or d.shape != (rho.shape[0],):
        raise ShapeError(f"observable of length {d.shape} vs state {rho.shape}")
    value = np.dot(d, np.diagonal(rho))
    if abs(value.imag) > IMAG_TOL:
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def density_matrix_violations(rho: np.ndarray) -> dict:
    """Measured deviations of ``rho`` from a valid density matrix."""
    rho = np.asarray(rho)
    herm = float(np.max(np.abs(rho - dagger(rho)))) if rho.size else 0.0
    trace = float(abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0).max())
    hermitian_part = 0.5 * (rho + dagger(rho))
    min_eig = float(np.linalg.eigvalsh(hermitian_part).min())
    return {"hermiticity": herm, "trace": trace, "min_eigenvalue": min_eig}


def check_density_matrix(rho: np.ndarray, *, psd: bool = True) -> None:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD.

    Accepts a single matrix or a stack of them. Meant for tests and debug
    runs; the engine does not call it on the hot path.
    """
    rho = np.asarray(rho)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise ShapeError(f"not a square matrix: {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    v = density_matrix_violations(rho)
    if v["hermiticity"] > HERMITIAN_TOL:
        raise ValueError(f"not Hermitian (deviation {v['hermiticity']:.3e})")
    if v["trace"] > TRACE_TOL:
        raise ValueError(f"trace deviates from 1 by {v['trace']:.3e}")
    if psd and v["min_eigenvalue"] < -PSD_TOL:
        raise ValueError(f"negative eigenvalue {v['min_eigenvalue']:.3e}")


def pure_state(index: int, dim: int) -> np.ndarray:
    """The projector |index><index| of dimension ``dim``."""
    rho = np.zeros((dim, dim), dtype=complex)
    rho[index, index] = 1.0
    return rho
