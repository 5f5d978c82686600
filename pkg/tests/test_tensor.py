from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_density
from qrnn_dm.exceptions import ShapeError
from qrnn_dm.tensor import (RegisterSplit, check_density_matrix, dagger, density_matrix_violations,
                            expectation_diag, partial_trace_E, partial_trace_M, pure_state,
                            tensor_product)


def kron_loop(a, b):
    m, n = a.shape
    p, q = b.shape
    out = np.zeros((m * p, n * q), dtype=np.result_type(a, b))
    for i in range(m):
        for j in range(n):
            for k in range(p):
                for l in range(q):
                    out[i * p + k, j * q + l] = a[i, j] * b[k, l]
    return out


def brute_trace_E(rho, N_E, N_M):
    out = np.zeros((N_M, N_M), dtype=complex)
    for q in range(N_M):
        for r in range(N_M):
            out[q, r] = sum(rho[i * N_M + q, i * N_M + r] for i in range(N_E))
    return out


def brute_trace_M(rho, N_E, N_M):
    out = np.zeros((N_E, N_E), dtype=complex)
    for i in range(N_E):
        for j in range(N_E):
            out[i, j] = sum(rho[i * N_M + q, j * N_M + q] for q in range(N_M))
    return out


def test_tensor_product_hand_values():
    a = np.array([[1, 2], [3, 4]])
    b = np.array([[0, 1], [1, 0]])
    expected = np.array([[0, 1, 0, 2], [1, 0, 2, 0], [0, 3, 0, 4], [3, 0, 4, 0]])
    np.testing.assert_array_equal(tensor_product(a, b), expected)


def test_tensor_product_matches_index_loop(rng):
    a = rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3))
    b = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
    np.testing.assert_allclose(tensor_product(a, b), kron_loop(a, b), atol=1e-15)


@pytest.mark.parametrize("n_E,n_M", [(1, 1), (1, 2), (2, 3)])
def test_partial_traces_match_brute_force(rng, n_E, n_M):
    split = RegisterSplit(n_E, n_M)
    rho = random_density(split.N, rng)
    np.testing.assert_allclose(partial_trace_E(rho, split), brute_trace_E(rho, split.N_E, split.N_M), atol=1e-14)
    np.testing.assert_allclose(partial_trace_M(rho, split), brute_trace_M(rho, split.N_E, split.N_M), atol=1e-14)


def test_partial_trace_of_product_state(rng):
    split = RegisterSplit(1, 2)
    a = random_density(2, rng)
    b = random_density(4, rng)
    joint = np.kron(a, b)
    np.testing.assert_allclose(partial_trace_E(joint, split), b, atol=1e-14)
    np.testing.assert_allclose(partial_trace_M(joint, split), a, atol=1e-14)


def test_partial_trace_batched(rng):
    split = RegisterSplit(1, 1)
    stack = np.stack([random_density(4, rng) for _ in range(3)])
    out = partial_trace_E(stack, split)
    assert out.shape == (3, 2, 2)
    np.testing.assert_allclose(out[1], brute_trace_E(stack[1], 2, 2), atol=1e-14)


def test_partial_trace_shape_error():
    with pytest.raises(ShapeError):
        partial_trace_E(np.eye(6), RegisterSplit(1, 2))


def test_register_split_requires_qubits():
    with pytest.raises(ValueError):
        RegisterSplit(0, 1)


def test_expectation_diag():
    rho = np.diag([0.25, 0.75]).astype(complex)
    assert expectation_diag(rho, [1, -1]) == pytest.approx(-0.5)
    with pytest.raises(ShapeError):
        expectation_diag(rho, [1, -1, 1])


def test_expectation_rejects_imaginary():
    rho = np.diag([0.5 + 1e-6j, 0.5])
    with pytest.raises(ValueError):
        expectation_diag(rho, [1, 1])


def test_check_density_matrix(rng):
    check_density_matrix(random_density(4, rng))
    check_density_matrix(pure_state(2, 4))
    with pytest.raises(ValueError, match="trace"):
        check_density_matrix(2 * pure_state(0, 2))
    with pytest.raises(ValueError, match="Hermitian"):
        check_density_matrix(np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(ValueError, match="negative"):
        check_density_matrix(np.diag([1.5, -0.5]))
    check_density_matrix(np.diag([1.5, -0.5]), psd=False)
    with pytest.raises(ShapeError):
        check_density_matrix(np.ones(3))


def test_violations_and_dagger(rng):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    np.testing.assert_array_equal(dagger(a), a.conj().T)
    v = density_matrix_violations(random_density(3, rng))
    assert v["trace"] < 1e-14 and v["hermiticity"] < 1e-14 and v["min_eigenvalue"] > -1e-14


@settings(max_examples=40, deadline=None)
@given(n_E=st.integers(1, 2), n_M=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_partial_traces_preserve_trace_and_positivity(n_E, n_M, seed):
    split = RegisterSplit(n_E, n_M)
    rho = random_density(split.N, np.random.default_rng(seed))
    for reduced in (partial_trace_E(rho, split), partial_trace_M(rho, split)):
        check_density_matrix(reduced)
