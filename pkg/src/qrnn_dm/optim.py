"""Limited-memory BFGS with a strong-Wolfe line search, unbounded.

Stops when the largest gradient component is at most ``g_tol``, when the
relative loss decrease of an iteration falls below ``ftol``, or after
``max_iter`` iterations.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import line_search
from scipy.optimize._linesearch import LineSearchWarning

from .exceptions import InitializationError


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_it: int
    n_fev: int
    n_jev: int
    converged: bool
    degraded: bool
    message: str
    losses: list = field(default_factory=list)  # best loss after each iteration


class _Objective:
    """Evaluates loss and gradient at the same point and remembers the last one."""

    def __init__(self, fun, grad):
        self.fun, self.grad = fun, grad
        self.n_fev = self.n_jev = 0
        self._x = None
        self._f = self._g = None

    def _at(self, x):
        if self._x is None or not np.array_equal(x, self._x):
            self._x = np.array(x, dtype=float)
            self._f = float(self.fun(self._x))
            self.n_fev += 1
            self._g = None
        return self._x

    def f(self, x):
        self._at(x)
        return self._f

    def g(self, x):
        self._at(x)
        if self._g is None:
            self._g = np.asarray(self.grad(self._x), dtype=float)
            self.n_jev += 1
        return self._g


def _two_loop(g, memory):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * s.dot(q)
        alphas.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        q *= s.dot(y) / y.dot(y)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * y.dot(q)
        q += (a - b) * s
    return -q


def minimize(fun: Callable, grad: Callable, x0, g_tol: float = 1e-5, max_iter: int = 1000,
             memory: int = 10, c1: float = 1e-4, c2: float = 0.9, ftol: float = 1e-9,
             callback: Callable | None = None) -> OptimizeResult:
    """Minimise ``fun`` given its gradient ``grad``.

    ``callback(k, x, f)`` is called after every accepted iteration. On a
    line-search failure the best point so far is returned with
    ``degraded=True``.
    """
    obj = _Objective(fun, grad)
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InitializationError("initial point is not finite")
    f, g = obj.f(x), obj.g(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise InitializationError("loss or gradient is not finite at the initial point")
    pairs: deque = deque(maxlen=memory)
    losses = []
    old_f = f + np.linalg.norm(g) / 2
    converged, degraded, message = False, False, "maximum number of iterations reached"
    n_it = 0
    while n_it < max_iter:
        if np.max(np.abs(g)) <= g_tol:
            converged, message = True, "gradient below g_tol"
            break
        d = _two_loop(g, pairs)
        if g.dot(d) >= 0:
            pairs.clear()
            d = -g
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LineSearchWarning)
            step = line_search(obj.f, obj.g, x, d, g, f, old_f, c1=c1, c2=c2, maxiter=20)[0]
            if step is None and pairs:
                pairs.clear()
                d = -g
                step = line_search(obj.f, obj.g, x, d, g, f, old_f, c1=c1, c2=c2, maxiter=20)[0]
        if step is None:
            degraded, message = True, "line search failed"
            break
        x_new = x + step * d
        f_new = obj.f(x_new)
        g_new = obj.g(x_new)
        s, y = x_new - x, g_new - g
        sy = s.dot(y)
        if sy > 1e-10 * y.dot(y):
            pairs.append((s, y, 1.0 / sy))
        old_f, decrease = f, f - f_new
        x, f, g = x_new, f_new, g_new
        n_it += 1
        losses.append(f)
        if callback is not None:
            callback(n_it, x, f)
        if decrease / max(abs(old_f), abs(f), 1.0) <= ftol:
            converged, message = True, "relative loss decrease below ftol"
            break
    return OptimizeResult(x, f, g, n_it, obj.n_fev, obj.n_jev, converged, degraded, message, losses)
