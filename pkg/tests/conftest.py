from __future__ import annotations

import numpy as np
import pytest

from qrnn_dm.ansatz import AnsatzConfig


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = rank or dim
    A = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = A @ A.conj().T
    return rho / np.trace(rho)


def random_theta(config: AnsatzConfig, rng: np.random.Generator, scale: float = 2 * np.pi) -> np.ndarray:
    theta = rng.uniform(0.0, scale, config.n_params)
    theta[config.bias_index] = rng.normal()
    return theta


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL = AnsatzConfig(n_E=1, n_M=1, L=1, R=0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
