"""Benchmark series (dimmed triangle, forced Van der Pol, two Van der Pol
oscillators) and their windowing into train/validation/test samples."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import IntegrationDivergenceError, SpecError, WindowingError

N_POINTS = 1000
T_END = 100.0
DT = T_END / N_POINTS
RK4_SUBSTEPS = 10
WINDOW = 20
HORIZON = 5
TEST_FRACTION = 0.2
VAL_FRACTION = 0.2
FULL_TEST_STRIDE = 5
RANGE_LIMIT = 0.75


@dataclass(frozen=True)
class SeriesSpec:
    """Generator parameters. Shifts are in samples of the 0.1 time grid."""

    case: str
    params: dict = field(default_factory=dict)
    n_points: int = N_POINTS
    substeps: int = RK4_SUBSTEPS

    def __post_init__(self):
        if self.case not in DEFAULT_PARAMS:
            raise SpecError(f"unknown case {self.case!r}; expected one of {sorted(DEFAULT_PARAMS)}")
        merged = dict(DEFAULT_PARAMS[self.case])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise SpecError(f"unknown parameters for case {self.case}: {sorted(unknown)}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)

    @property
    def n_v(self) -> int:
        return 2 if self.case == "c" else 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SeriesSpec":
        return cls(d["case"], dict(d.get("params", {})), int(d.get("n_points", N_POINTS)),
                   int(d.get("substeps", RK4_SUBSTEPS)))


DEFAULT_PARAMS = {
    "a": {"A": 0.75, "mu": 0.02, "P": 5.0, "t_d": 12},
    "b": {"A": 1.0, "c": 0.25, "mu": 2.0, "omega": 5.0, "t_d": 15},
    "c": {"c0": 0.25, "c1": 0.25, "d0": 1.0, "d1": 0.1, "mu0": 2.0, "mu1": 1.0, "t0": 5, "t1": 18},
}


@dataclass
class MultivariateSeries:
    time: np.ndarray  # (n,)
    inputs: np.ndarray  # (n, n_v)
    target: np.ndarray  # (n,)
    spec: SeriesSpec
    sources: np.ndarray | None = None  # underlying signals on the extended grid

    def __len__(self):
        return len(self.time)


def triangle_wave(t, period: float) -> np.ndarray:
    """Unit-amplitude triangle wave, zero and rising at t = 0."""
    return (2 / np.pi) * np.arcsin(np.sin(2 * np.pi * np.asarray(t) / period))


def rk4(f, y0, dt: float, n_steps: int, t0: float = 0.0) -> np.ndarray:
    """Fixed-step classical Runge-Kutta; returns the (n_steps + 1, dim) path."""
    y = np.array(y0, dtype=float)
    out = np.empty((n_steps + 1,) + y.shape)
    out[0] = y
    t = t0
    for k in range(n_steps):
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (k + 1) * dt
        if not np.all(np.isfinite(y)):
            raise IntegrationDivergenceError(f"non-finite state at t={t:.3f}")
        out[k + 1] = y
    return out


def van_der_pol(mu: float, amplitude: float = 0.0, omega: float = 0.0, y0=(1.0, 0.0),
                n_samples: int = N_POINTS, dt: float = DT, substeps: int = RK4_SUBSTEPS) -> np.ndarray:
    """Position of ``s'' - mu (1 - s^2) s' + s = A sin(omega t)`` sampled every ``dt``."""
    def rhs(t, y):
        s, ds = y
        return np.array([ds, mu * (1 - s * s) * ds - s + amplitude * np.sin(omega * t)])

    path = rk4(rhs, y0, dt / substeps, (n_samples - 1) * substeps)
    return path[::substeps, 0]


def _grid(n: int) -> np.ndarray:
    return np.arange(n) * DT


def gen_triangular(spec: SeriesSpec) -> MultivariateSeries:
    if spec.case != "a":
        raise SpecError(f"triangular generator needs case 'a', got {spec.case!r}")
    p = spec.params
    n, shift = spec.n_points, int(p["t_d"])
    t = _grid(n + shift)
    s = p["A"] * np.exp(-p["mu"] * t) * triangle_wave(t, p["P"])
    return MultivariateSeries(t[:n], s[:n, None].copy(), s[shift:shift + n].copy(), spec, s[:, None])


def gen_forced_vdp(spec: SeriesSpec) -> MultivariateSeries:
    if spec.case != "b":
        raise SpecError(f"forced Van der Pol generator needs case 'b', got {spec.case!r}")
    p = spec.params
    n, shift = spec.n_points, int(p["t_d"])
    s = van_der_pol(p["mu"], p["A"], p["omega"], n_samples=n + shift, substeps=spec.substeps)
    x = p["c"] * s
    return MultivariateSeries(_grid(n), x[:n, None].copy(), x[shift:shift + n].copy(), spec, s[:, None])


def double_vdp_target(x0: np.ndarray, x1: np.ndarray, d0: float, d1: float, t0: int, t1: int,
                      n: int) -> np.ndarray:
    return d0 * x0[t0:t0 + n] + d1 * x1[t1:t1 + n]


def gen_double_vdp(spec: SeriesSpec) -> MultivariateSeries:
    if spec.case != "c":
        raise SpecError(f"double Van der Pol generator needs case 'c', got {spec.case!r}")
    p = spec.params
    n = spec.n_points
    t0, t1 = int(p["t0"]), int(p["t1"])
    m = n + max(t0, t1)
    s0 = van_der_pol(p["mu0"], n_samples=m, substeps=spec.substeps)
    s1 = van_der_pol(p["mu1"], n_samples=m, substeps=spec.substeps)
    x0, x1 = p["c0"] * s0, p["c1"] * s1
    y = double_vdp_target(x0, x1, p["d0"], p["d1"], t0, t1, n)
    inputs = np.stack([x0[:n], x1[:n]], axis=1)
    return MultivariateSeries(_grid(n), inputs, y, spec, np.stack([s0, s1], axis=1))


GENERATORS = {"a": gen_triangular, "b": gen_forced_vdp, "c": gen_double_vdp}


def generate(spec: SeriesSpec | str) -> MultivariateSeries:
    if isinstance(spec, str):
        spec = SeriesSpec(spec)
    return GENERATORS[spec.case](spec)


# --- windowing --------------------------------------------------------------

@dataclass
class WindowedDataset:
    """Non-overlapping windows with split labels plus the stride-5 windows that
    tile the test region."""

    series: MultivariateSeries
    starts: np.ndarray  # first index of each window
    labels: np.ndarray  # "train" | "val" | "test"
    full_test_starts: np.ndarray
    seed: int
    window: int = WINDOW
    horizon: int = HORIZON

    def _X(self, starts) -> np.ndarray:
        idx = np.asarray(starts)[:, None] + np.arange(self.window)
        return self.series.inputs[idx]

    def _Y(self, starts) -> np.ndarray:
        idx = np.asarray(starts)[:, None] + np.arange(self.window - self.horizon, self.window)
        return self.series.target[idx]

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.labels == split)

    def arrays(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)``: inputs (n, window, n_v) and targets (n, horizon)."""
        if split == "full_test":
            starts = self.full_test_starts
        else:
            starts = self.starts[self.indices(split)]
        return self._X(starts), self._Y(starts)

    def horizon_positions(self, split: str) -> np.ndarray:
        """Series indices predicted by each window of ``split``, (n, horizon)."""
        starts = self.full_test_starts if split == "full_test" else self.starts[self.indices(split)]
        return np.asarray(starts)[:, None] + np.arange(self.window - self.horizon, self.window)

    def split_indices(self) -> dict:
        return {k: self.indices(k).tolist() for k in ("train", "val", "test")}


def split_labels(n_windows: int, seed: int) -> np.ndarray:
    """Last 20 % test; a seeded draw of 20 % of the rest for validation."""
    n_test = int(round(TEST_FRACTION * n_windows))
    n_rest = n_windows - n_test
    n_val = int(round(VAL_FRACTION * n_rest))
    labels = np.array(["train"] * n_windows, dtype=object)
    labels[n_rest:] = "test"
    rng = np.random.default_rng(seed)
    labels[np.sort(rng.choice(n_rest, size=n_val, replace=False))] = "val"
    return labels.astype(str)


def make_windows(series: MultivariateSeries, seed: int, window: int = WINDOW,
                 horizon: int = HORIZON) -> WindowedDataset:
    n = len(series)
    if n < window + horizon:
        raise WindowingError(f"series of length {n} is too short for windows of {window}")
    n_windows = n // window
    starts = np.arange(n_windows) * window
    labels = split_labels(n_windows, seed)
    test_starts = starts[labels == "test"]
    if len(test_starts) == 0:
        raise WindowingError("no test windows")
    lo, hi = test_starts[0], test_starts[-1] + window
    # windows whose last `horizon` points tile [lo, hi)
    ends = np.arange(lo + horizon, hi + 1, FULL_TEST_STRIDE)
    full = ends - window
    if full[0] < 0:
        raise WindowingError("test region starts too early for a full input window")
    return WindowedDataset(series, starts, labels, full, seed, window, horizon)


def load_case(case: str, seed: int = 0) -> WindowedDataset:
    return make_windows(generate(SeriesSpec(case)), seed)
