from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import rosen, rosen_der

from qrnn_dm.exceptions import InitializationError
from qrnn_dm.optim import minimize


def test_quadratic(rng):
    a = rng.normal(size=6)
    res = minimize(lambda x: np.sum((x - a) ** 2), lambda x: 2 * (x - a), rng.normal(size=6), g_tol=1e-10)
    assert np.abs(res.x - a).max() < 1e-8
    assert res.n_it <= 20 and res.converged and not res.degraded


def test_scaled_quadratic_uses_curvature(rng):
    D = np.array([1.0, 10.0, 100.0, 1000.0])
    res = minimize(lambda x: 0.5 * np.sum(D * x * x), lambda x: D * x, np.ones(4), g_tol=1e-9)
    assert np.abs(res.x).max() < 1e-6 and res.n_it <= 30


def test_rosenbrock():
    res = minimize(rosen, rosen_der, np.array([-1.2, 1.0]), g_tol=1e-10, max_iter=500)
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-5)
    assert res.n_fev >= res.n_it and res.n_jev >= res.n_it


def test_losses_monotone():
    res = minimize(rosen, rosen_der, np.array([-1.2, 1.0]), g_tol=1e-8)
    assert np.all(np.diff(res.losses) <= 0)


def test_max_iter_and_callback():
    seen = []
    res = minimize(rosen, rosen_der, np.array([-1.2, 1.0]), max_iter=3,
                   callback=lambda k, x, f: seen.append((k, f)))
    assert res.n_it == 3 and not res.converged
    assert [k for k, _ in seen] == [1, 2, 3]
    assert seen[-1][1] == res.fun


def test_relative_decrease_stop():
    # the loss is dominated by a constant, so its relative decrease is tiny
    res = minimize(lambda x: 1e4 + x[0] ** 2, lambda x: 2 * x, np.array([1e-3]), g_tol=1e-20)
    assert res.converged and "ftol" in res.message and res.n_it == 1


def test_nonfinite_start():
    with pytest.raises(InitializationError):
        minimize(rosen, rosen_der, np.array([np.nan, 1.0]))
    with pytest.raises(InitializationError):
        minimize(lambda x: np.inf, lambda x: np.zeros(1), np.zeros(1))


def test_line_search_failure_is_degraded():
    # the gradient points the wrong way, so no step satisfies the Wolfe conditions
    res = minimize(lambda x: float(x[0] ** 2), lambda x: -2 * x, np.array([1.0]))
    assert res.degraded and not res.converged and res.x[0] == 1.0
