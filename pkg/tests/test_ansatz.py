from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from qrnn_dm.ansatz import (CASE_CONFIGS, AnsatzConfig, build_encoding, build_evolution,
                            cz_all_diag, cz_pair_diag, encoding_state, kron_all, param_count,
                            parameter_layout, rotation_gate, split_params, split_w_blocks, u3_gate)
from qrnn_dm.exceptions import ShapeError

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2)


def unitary_error(U):
    return np.abs(U.conj().T @ U - np.eye(U.shape[0])).max()


def test_table_parameter_counts():
    assert [param_count(CASE_CONFIGS[c]) for c in "abc"] == [31, 43, 100]


def test_layout_covers_every_index():
    cfg = CASE_CONFIGS["b"]
    layout = parameter_layout(cfg)
    assert len(layout) == cfg.n_params
    roles = [s.role for s in layout]
    assert roles.count("encoding") == 3 * cfg.n_E * cfg.R
    assert roles[-1] == "bias"
    alpha, beta, bias = split_params(np.arange(cfg.n_params, dtype=float), cfg)
    assert alpha.size + beta.size + 1 == cfg.n_params and bias == cfg.n_params - 1


def test_config_validation_and_roundtrip():
    cfg = AnsatzConfig(2, 3, 5, 3, 2)
    assert AnsatzConfig.from_dict(cfg.to_dict()) == cfg
    for bad in [(0, 1, 1, 0), (1, 0, 1, 0), (1, 1, -1, 0), (1, 1, 1, -1), (1, 1, 1, 0, 2)]:
        with pytest.raises(ValueError):
            AnsatzConfig(*bad)


@pytest.mark.parametrize("axis,P", [("X", X), ("Y", Y), ("Z", Z)])
def test_rotation_matches_matrix_exponential(axis, P):
    for angle in (0.0, 0.3, -1.7, np.pi):
        np.testing.assert_allclose(rotation_gate(axis, angle), expm(-0.5j * angle * P), atol=1e-14)


def test_rotation_hand_values():
    np.testing.assert_allclose(rotation_gate("Y", np.pi), [[0, -1], [1, 0]], atol=1e-15)
    np.testing.assert_allclose(rotation_gate("X", np.pi), -1j * X, atol=1e-15)
    batch = rotation_gate("Z", np.array([0.1, 0.2]))
    assert batch.shape == (2, 2, 2)
    with pytest.raises(ValueError):
        rotation_gate("W", 0.1)


def test_u3_composition():
    t = (0.4, -1.1, 2.3)
    expected = expm(-0.5j * t[1] * Z) @ expm(-0.5j * t[0] * Y) @ expm(-0.5j * t[2] * Z)
    np.testing.assert_allclose(u3_gate(*t), expected, atol=1e-14)
    np.testing.assert_allclose(u3_gate(0, 0, 0), I2, atol=1e-15)


def test_kron_all_order(rng):
    mats = rng.normal(size=(3, 2, 2))
    np.testing.assert_allclose(kron_all(mats), np.kron(np.kron(mats[0], mats[1]), mats[2]), atol=1e-14)


def test_encoding_without_reuploads_is_ry():
    cfg = AnsatzConfig(1, 1, 1, 0)
    np.testing.assert_allclose(build_encoding([0.3], np.zeros(0), cfg), rotation_gate("Y", 0.3), atol=1e-15)


def test_encoding_oracle(rng):
    # n_E=2, n_v=1, R=2: both E qubits carry the same variable
    cfg = AnsatzConfig(2, 1, 1, 2)
    x = 0.37
    alpha = rng.uniform(0, 2 * np.pi, cfg.n_alpha).reshape(2, 2, 3)
    up = np.kron(rotation_gate("Y", x), rotation_gate("Y", x))
    V = up
    for r in range(2):
        col = np.kron(u3_gate(*alpha[r, 0]), u3_gate(*alpha[r, 1]))
        V = up @ col @ V
    np.testing.assert_allclose(build_encoding([x], alpha.ravel(), cfg), V, atol=1e-14)
    np.testing.assert_allclose(encoding_state([x], alpha.ravel(), cfg), V[:, 0], atol=1e-14)


def test_encoding_multivariate_mapping():
    cfg = AnsatzConfig(2, 1, 1, 0, n_v=2)
    V = build_encoding([0.2, -0.5], np.zeros(0), cfg)
    np.testing.assert_allclose(V, np.kron(rotation_gate("Y", 0.2), rotation_gate("Y", -0.5)), atol=1e-15)
    with pytest.raises(ShapeError):
        build_encoding([0.2], np.zeros(0), cfg)


def test_encoding_batches(rng):
    cfg = CASE_CONFIGS["a"]
    xs = rng.uniform(-1, 1, (4, 1))
    alpha = rng.uniform(0, 1, cfg.n_alpha)
    batch = build_encoding(xs, alpha, cfg)
    for k in range(4):
        np.testing.assert_allclose(batch[k], build_encoding(xs[k], alpha, cfg), atol=1e-14)


def cz_oracle(n, a, b):
    """CZ between qubits a and b of an n-qubit register (qubit 0 most significant)."""
    P0 = np.diag([1, 0])
    P1 = np.diag([0, 1])

    def embed(ops):
        out = np.eye(1)
        for q in range(n):
            out = np.kron(out, ops.get(q, I2))
        return out

    return embed({a: P0}) + embed({a: P1, b: Z})


def test_cz_pair_diag_matches_projector_form():
    cfg = AnsatzConfig(2, 3, 1, 0)
    for e in range(2):
        for m in range(3):
            np.testing.assert_allclose(np.diag(cz_pair_diag(cfg, e, m)), cz_oracle(5, e, 2 + m))


def test_cz_all_is_product_of_pairs():
    cfg = AnsatzConfig(2, 2, 1, 0)
    prod = np.ones(2**cfg.n)
    for e in range(cfg.n_E):
        for m in range(cfg.n_M):
            prod = prod * cz_pair_diag(cfg, e, m)
    np.testing.assert_array_equal(cz_all_diag(cfg), prod)


def test_evolution_oracle_two_qubits(rng):
    cfg = AnsatzConfig(1, 1, 2, 0)
    beta = rng.uniform(0, 2 * np.pi, cfg.n_beta)
    b = beta[:12].reshape(2, 2, 3)
    CZ = np.diag([1, 1, 1, -1])
    W = np.eye(4)
    for layer in range(2):
        W = CZ @ np.kron(u3_gate(*b[layer, 0]), u3_gate(*b[layer, 1])) @ W
    W = np.kron(u3_gate(*beta[12:15]), I2) @ W
    np.testing.assert_allclose(build_evolution(beta, cfg), W, atol=1e-14)


@pytest.mark.parametrize("case", "abc")
def test_unitarity(rng, case):
    cfg = CASE_CONFIGS[case]
    theta = rng.uniform(0, 2 * np.pi, cfg.n_params)
    alpha, beta, _ = split_params(theta, cfg)
    assert unitary_error(build_encoding(np.full(cfg.n_v, 0.4), alpha, cfg)) < 1e-13
    assert unitary_error(build_evolution(beta, cfg)) < 1e-13


def test_w_blocks(rng):
    cfg = AnsatzConfig(1, 2, 1, 0)
    W = build_evolution(rng.uniform(0, 1, cfg.n_beta), cfg)
    blocks = split_w_blocks(W, cfg.split)
    assert len(blocks) == 2 and blocks[0].shape == (4, 8)
    np.testing.assert_array_equal(np.vstack(blocks), W)
    with pytest.raises(ShapeError):
        split_w_blocks(W[:4], cfg.split)
