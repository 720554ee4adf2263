"""Benchmark systems with known causal graphs, trend injection and detrending."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import Legendre
from scipy.integrate import solve_ivp

from .embedding import MultivariateSeries, write_csv
from .errors import GenerationError, InvalidSpecError

__all__ = [
    "HenonSpec",
    "LorenzSpec",
    "LinearSystemSpec",
    "TrendSpec",
    "Simulation",
    "gen_coupled_henon",
    "gen_coupled_lorenz",
    "gen_linear_system",
    "henon_edges",
    "lorenz_edges",
    "linear_edges",
    "stochastic_trend",
    "add_stochastic_trend",
    "moving_average",
    "detrend_polynomial",
    "detrend_moving_average",
    "detrend",
    "write_dataset",
]


@dataclass(frozen=True)
class Simulation:
    """Generated data together with the true directed edges (0-based column pairs)."""

    data: MultivariateSeries
    edges: frozenset
    spec: object
    seed: int | None


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# --- coupled Henon maps ----------------------------------------------------


@dataclass(frozen=True)
class HenonSpec:
    K: int = 3
    C: float = 0.2
    N: int = 1024
    transient: int = 1000
    max_retries: int = 100


def henon_edges(K: int) -> frozenset:
    """Inner maps are driven by both neighbours; the two end maps are free."""
    edges = set()
    for i in range(1, K - 1):
        edges.add((i - 1, i))
        edges.add((i + 1, i))
    return frozenset(edges)


def _iterate_henon(K, C, n_total, x0, x1):
    x = np.empty((n_total, K))
    x[0], x[1] = x0, x1
    inner = slice(1, K - 1)
    for t in range(2, n_total):
        prev, prev2 = x[t - 1], x[t - 2]
        row = 1.4 - prev ** 2 + 0.3 * prev2
        if K > 2:
            drive = 0.5 * C * (prev[:-2] + prev[2:]) + (1.0 - C) * prev[inner]
            row[inner] = 1.4 - drive ** 2 + 0.3 * prev2[inner]
        x[t] = row
        if np.any(np.abs(row) > 10.0):
            return None
    return x


def gen_coupled_henon(spec: HenonSpec, seed=None, initial=None) -> Simulation:
    """Chain of K Henon maps coupled to their nearest neighbours.

    ``x_i(t) = 1.4 - (0.5 C (x_{i-1}(t-1) + x_{i+1}(t-1)) + (1-C) x_i(t-1))^2 + 0.3 x_i(t-2)``
    for the inner maps; the first and last maps are uncoupled.

    Initial conditions are drawn uniformly on [0, 1]^2 per map unless given
    as a ``(2, K)`` array.  Orbits leaving ``|x| <= 10`` are redrawn.
    """
    if spec.K < 2:
        raise InvalidSpecError("need K >= 2 Henon maps")
    rng = _rng(seed)
    n_total = spec.N + spec.transient + 2
    for _ in range(spec.max_retries):
        if initial is None:
            x0, x1 = rng.uniform(0.0, 1.0, size=(2, spec.K))
        else:
            x0, x1 = np.asarray(initial, dtype=float)
        x = _iterate_henon(spec.K, spec.C, n_total, x0, x1)
        if x is not None:
            values = x[-spec.N:]
            data = MultivariateSeries(values, tuple(f"X{i + 1}" for i in range(spec.K)))
            return Simulation(data, henon_edges(spec.K), spec, _seed_repr(seed))
        if initial is not None:
            break
    raise GenerationError(f"Henon orbit diverged in {spec.max_retries} attempts")


# --- coupled Lorenz systems ------------------------------------------------


@dataclass(frozen=True)
class LorenzSpec:
    C: float = 2.0
    N: int = 4096
    dt: float = 0.01
    transient: float = 10.0
    rtol: float = 1e-6
    atol: float = 1e-9
    n_systems: int = 3


def lorenz_edges(n_systems: int = 3) -> frozenset:
    return frozenset((i, i + 1) for i in range(n_systems - 1))


def _lorenz_rhs(C, n_systems):
    def rhs(t, s):
        x, y, z = s[0::3], s[1::3], s[2::3]
        dx = -10.0 * x + 10.0 * y
        dx[1:] += C * (x[:-1] - x[1:])
        out = np.empty_like(s)
        out[0::3] = dx
        out[1::3] = -x * z + 28.0 * x - y
        out[2::3] = x * y - 8.0 / 3.0 * z
        return out

    return rhs


def gen_coupled_lorenz(spec: LorenzSpec, seed=None) -> Simulation:
    """Lorenz systems coupled in a chain through their x variables.

    Integrated with the adaptive Dormand-Prince 4(5) pair; the first
    coordinate of each system is sampled every ``dt`` after the transient.
    """
    if spec.N < 1:
        raise InvalidSpecError("N must be >= 1")
    rng = _rng(seed)
    k = spec.n_systems
    s0 = np.empty(3 * k)
    s0[0::3] = rng.uniform(-10.0, 10.0, k)
    s0[1::3] = rng.uniform(-10.0, 10.0, k)
    s0[2::3] = rng.uniform(10.0, 40.0, k)
    t_eval = spec.transient + spec.dt * np.arange(spec.N)
    sol = solve_ivp(
        _lorenz_rhs(spec.C, k),
        (0.0, t_eval[-1]),
        s0,
        method="RK45",
        t_eval=t_eval,
        rtol=spec.rtol,
        atol=spec.atol,
    )
    if not sol.success:
        raise GenerationError(f"Lorenz integration failed: {sol.message}")
    values = sol.y[0::3].T
    labels = ("X", "Y", "Z") if k == 3 else tuple(f"X{i + 1}" for i in range(k))
    return Simulation(MultivariateSeries(values, labels), lorenz_edges(k), spec, _seed_repr(seed))


# --- linear example system -------------------------------------------------


@dataclass(frozen=True)
class LinearSystemSpec:
    """``x_t = a z_t + e_x``, ``y_t = b z_t + c x_{t-1} + e_y``, ``z_t = d z_{t-1} + e_z``."""

    a: float = 2.0
    b: float = -1.0
    c: float = 0.0
    d: float = 0.8
    noise_sd: tuple[float, float, float] = (1.0, 2.0, 1.0)
    N: int = 1024
    transient: int = 100


def linear_edges(spec: LinearSystemSpec) -> frozenset:
    edges = set()
    if spec.a != 0:
        edges.add((2, 0))
    if spec.b != 0:
        edges.add((2, 1))
    if spec.c != 0:
        edges.add((0, 1))
    return frozenset(edges)


def gen_linear_system(spec: LinearSystemSpec, seed=None) -> Simulation:
    """Columns are (X, Y, Z); Z is an AR(1) process driving X and Y."""
    if not abs(spec.d) < 1:
        raise InvalidSpecError("|d| must be < 1 for a stationary Z")
    rng = _rng(seed)
    n = spec.N + spec.transient
    sx, sy, sz = spec.noise_sd
    ez = rng.normal(0.0, sz, n)
    ex = rng.normal(0.0, sx, n)
    ey = rng.normal(0.0, sy, n)
    z = np.empty(n)
    z[0] = ez[0] / np.sqrt(1.0 - spec.d ** 2)
    for t in range(1, n):
        z[t] = spec.d * z[t - 1] + ez[t]
    x = spec.a * z + ex
    y = spec.b * z + ey
    y[1:] += spec.c * x[:-1]
    values = np.column_stack([x, y, z])[spec.transient:]
    return Simulation(
        MultivariateSeries(values, ("X", "Y", "Z")), linear_edges(spec), spec, _seed_repr(seed)
    )


# --- trends and detrending -------------------------------------------------


@dataclass(frozen=True)
class TrendSpec:
    """Random-walk trend: step SD is ``sd_multiplier`` times the channel SD."""

    sd_multiplier: float = 1.0
    smoothing: int = 100


def moving_average(x, P: int) -> np.ndarray:
    """Centred moving average over a window of ``P`` samples.

    Near the ends the window shrinks symmetrically around the sample so it
    stays centred.  For even ``P`` the interior window reaches one sample
    further ahead than behind.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if P <= 1:
        return x.copy()
    i = np.arange(n)
    room = np.minimum(i, n - 1 - i)
    left = np.minimum((P - 1) // 2, room)
    right = np.minimum(P // 2, room)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    return (csum[i + right + 1] - csum[i - left]) / (left + right + 1)


def stochastic_trend(n: int, step_sd: float, smoothing: int, rng) -> np.ndarray:
    walk = np.cumsum(rng.normal(0.0, 1.0, n)) * step_sd
    return moving_average(walk, smoothing)


def add_stochastic_trend(series, spec: TrendSpec | None = None, seed=None, return_trend=False):
    """Add an independent smoothed Gaussian random walk to each channel.

    ``series`` may be a :class:`MultivariateSeries` or an array (1-D or
    time x channels).  With ``return_trend`` the added trend is returned too.
    """
    spec = spec or TrendSpec()
    rng = _rng(seed)
    is_mv = isinstance(series, MultivariateSeries)
    values = np.asarray(series.values if is_mv else series, dtype=float)
    arr = values[:, None] if values.ndim == 1 else values
    trend = np.column_stack([
        stochastic_trend(len(arr), spec.sd_multiplier * arr[:, j].std(), spec.smoothing, rng)
        for j in range(arr.shape[1])
    ])
    out = arr + trend
    if values.ndim == 1:
        out, trend = out[:, 0], trend[:, 0]
    if is_mv:
        out = MultivariateSeries(out, series.labels)
    return (out, trend) if return_trend else out


def detrend_polynomial(series, degree: int = 15) -> np.ndarray:
    """Residuals of a least-squares Legendre fit on time mapped to [-1, 1]."""
    x = np.asarray(series, dtype=float)
    if degree < 0 or degree >= len(x):
        raise InvalidSpecError(f"degree must be in [0, N), got {degree}")
    t = np.arange(len(x), dtype=float)
    fit = Legendre.fit(t, x, degree, domain=[t[0], t[-1]] if len(x) > 1 else None)
    return x - fit(t)


def detrend_moving_average(series, P: int) -> np.ndarray:
    """Subtract a centred moving average of width ``P``; ``P = 0`` is a no-op."""
    x = np.asarray(series, dtype=float)
    if P < 0 or P >= max(len(x), 1):
        raise InvalidSpecError(f"P must be in [0, N), got {P}")
    if P == 0:
        return x.copy()
    return x - moving_average(x, P)


def detrend(data: MultivariateSeries, method: str = "none", order: int = 0) -> MultivariateSeries:
    """Apply a detrending method column-wise: ``"polynomial"``, ``"moving_average"`` or ``"none"``."""
    if method == "none":
        return data
    fn = {"polynomial": detrend_polynomial, "moving_average": detrend_moving_average}.get(method)
    if fn is None:
        raise InvalidSpecError(f"unknown detrending method {method!r}")
    cols = [fn(data.values[:, j], order) for j in range(data.n_vars)]
    return MultivariateSeries(np.column_stack(cols), data.labels)


# --- persistence -----------------------------------------------------------


def _seed_repr(seed):
    return seed if isinstance(seed, (int, np.integer, type(None))) else None


def write_dataset(sim: Simulation, path) -> tuple[Path, Path]:
    """Write ``<path>`` as CSV and ``<path>.json`` with spec, seed and edges."""
    path = Path(path)
    write_csv(sim.data, path)
    meta = {
        "system": type(sim.spec).__name__,
        "spec": asdict(sim.spec) if hasattr(sim.spec, "__dataclass_fields__") else repr(sim.spec),
        "seed": None if sim.seed is None else int(sim.seed),
        "labels": list(sim.data.labels),
        "edges": [[sim.data.labels[i], sim.data.labels[j]] for i, j in sorted(sim.edges)],
    }
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, side
