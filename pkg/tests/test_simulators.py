import json

import numpy as np
import pytest

from rankte.embedding import MultivariateSeries, read_csv
from rankte.errors import GenerationError, InvalidSpecError
from rankte.simulators import (
    HenonSpec,
    LinearSystemSpec,
    LorenzSpec,
    TrendSpec,
    add_stochastic_trend,
    detrend,
    detrend_moving_average,
    detrend_polynomial,
    gen_coupled_henon,
    gen_coupled_lorenz,
    gen_linear_system,
    henon_edges,
    lorenz_edges,
    moving_average,
    write_dataset,
)


# --- Henon ---------------------------------------------------------------------


def test_henon_uncoupled_channels_follow_scalar_map():
    sim = gen_coupled_henon(HenonSpec(K=4, C=0.0, N=300), seed=2)
    x = sim.data.values
    rhs = 1.4 - x[1:-1] ** 2 + 0.3 * x[:-2]
    assert np.array_equal(x[2:], rhs)


def test_henon_identical_initial_conditions_give_identical_channels():
    init = np.array([[0.3] * 3, [0.6] * 3])
    sim = gen_coupled_henon(HenonSpec(K=3, C=0.0, N=200), initial=init)
    x = sim.data.values
    assert np.array_equal(x[:, 0], x[:, 1]) and np.array_equal(x[:, 1], x[:, 2])


def test_henon_coupled_recurrence():
    C = 0.2
    sim = gen_coupled_henon(HenonSpec(K=3, C=C, N=200), seed=5)
    x = sim.data.values
    t = np.arange(2, 200)
    drive = 0.5 * C * (x[t - 1, 0] + x[t - 1, 2]) + (1 - C) * x[t - 1, 1]
    assert np.allclose(x[t, 1], 1.4 - drive ** 2 + 0.3 * x[t - 2, 1], atol=0, rtol=0)
    for i in (0, 2):
        assert np.array_equal(x[t, i], 1.4 - x[t - 1, i] ** 2 + 0.3 * x[t - 2, i])


def test_henon_orbits_bounded():
    for seed in range(100):
        x = gen_coupled_henon(HenonSpec(K=3, C=0.2, N=1024), seed=seed).data.values
        assert np.max(np.abs(x)) < 2.0


def test_henon_edges_and_labels():
    assert henon_edges(3) == {(0, 1), (2, 1)}
    assert henon_edges(5) == {(0, 1), (2, 1), (1, 2), (3, 2), (2, 3), (4, 3)}
    assert henon_edges(2) == frozenset()
    sim = gen_coupled_henon(HenonSpec(K=5, N=50), seed=0)
    assert sim.data.labels == ("X1", "X2", "X3", "X4", "X5")


def test_henon_divergence_exhausts_retries():
    with pytest.raises(GenerationError):
        gen_coupled_henon(HenonSpec(K=3, N=10), initial=np.array([[5.0] * 3, [5.0] * 3]))
    with pytest.raises(InvalidSpecError):
        gen_coupled_henon(HenonSpec(K=1))


def test_henon_seed_determinism():
    a = gen_coupled_henon(HenonSpec(), seed=11).data.values
    b = gen_coupled_henon(HenonSpec(), seed=11).data.values
    c = gen_coupled_henon(HenonSpec(), seed=12).data.values
    assert np.array_equal(a, b) and not np.array_equal(a, c)


# --- Lorenz --------------------------------------------------------------------


def test_lorenz_shape_bounds_and_determinism():
    spec = LorenzSpec(C=2.0, N=2000)
    a = gen_coupled_lorenz(spec, seed=3)
    b = gen_coupled_lorenz(spec, seed=3)
    assert np.array_equal(a.data.values, b.data.values)
    assert a.data.values.shape == (2000, 3)
    assert a.data.labels == ("X", "Y", "Z")
    assert np.max(np.abs(a.data.values)) <= 25.0
    assert a.edges == lorenz_edges(3) == {(0, 1), (1, 2)}


def test_lorenz_matches_tight_reference_integration():
    from scipy.integrate import solve_ivp

    spec = LorenzSpec(C=0.0, N=50, transient=0.5, n_systems=2)
    sim = gen_coupled_lorenz(spec, seed=0)
    # initial conditions are drawn coordinate by coordinate across systems
    rng = np.random.default_rng(0)
    xs, ys, zs = rng.uniform(-10, 10, 2), rng.uniform(-10, 10, 2), rng.uniform(10, 40, 2)
    x0 = np.array([xs[0], ys[0], zs[0]])

    def rhs(t, s):
        x, y, z = s
        return [10 * (y - x), x * (28 - z) - y, x * y - 8 / 3 * z]

    t_eval = 0.5 + 0.01 * np.arange(50)
    ref = solve_ivp(rhs, (0, t_eval[-1]), x0, method="DOP853", t_eval=t_eval, rtol=1e-11, atol=1e-12)
    assert np.allclose(sim.data.values[:, 0], ref.y[0], atol=1e-3)


def test_lorenz_rejects_empty():
    with pytest.raises(InvalidSpecError):
        gen_coupled_lorenz(LorenzSpec(N=0))


# --- linear system ---------------------------------------------------------------


def test_linear_system_structure():
    spec = LinearSystemSpec(a=2.0, b=-1.0, c=0.5, d=0.8, N=20_000)
    sim = gen_linear_system(spec, seed=4)
    x, y, z = sim.data.values.T
    assert sim.data.labels == ("X", "Y", "Z")
    assert sim.edges == {(2, 0), (2, 1), (0, 1)}
    # residuals recover the noise SDs (1, 2, 1)
    assert np.std(x - 2 * z) == pytest.approx(1.0, rel=0.03)
    assert np.std(y[1:] + z[1:] - 0.5 * x[:-1]) == pytest.approx(2.0, rel=0.03)
    assert np.std(z[1:] - 0.8 * z[:-1]) == pytest.approx(1.0, rel=0.03)


def test_linear_system_stationary_variance():
    z = gen_linear_system(LinearSystemSpec(N=10_000), seed=0).data.values[:, 2]
    assert np.var(z) == pytest.approx(1 / (1 - 0.8**2), rel=0.1)


def test_linear_system_edges_follow_coefficients():
    assert gen_linear_system(LinearSystemSpec(a=0, c=1, N=20), seed=0).edges == {(2, 1), (0, 1)}
    with pytest.raises(InvalidSpecError):
        gen_linear_system(LinearSystemSpec(d=1.0))


# --- trends and detrending ---------------------------------------------------------


def _henon(seed=0):
    return gen_coupled_henon(HenonSpec(K=3, N=1024), seed=seed).data


def test_zero_trend_is_identity():
    data = _henon()
    out = add_stochastic_trend(data, TrendSpec(sd_multiplier=0.0), seed=1)
    assert np.array_equal(out.values, data.values)


def test_trend_increases_spread_and_is_exactly_removable():
    data = _henon()
    out, trend = add_stochastic_trend(data, TrendSpec(), seed=1, return_trend=True)
    assert np.all(out.values.std(axis=0) > data.values.std(axis=0))
    assert np.max(np.abs(out.values - trend - data.values)) < 1e-12
    # channels get independent trends
    assert not np.allclose(trend[:, 0], trend[:, 1])


def test_trend_step_sd_scales_with_multiplier():
    x = np.random.default_rng(0).normal(0, 3.0, 20_000)
    _, trend = add_stochastic_trend(x, TrendSpec(sd_multiplier=0.6, smoothing=1), seed=2, return_trend=True)
    assert np.std(np.diff(trend)) == pytest.approx(0.6 * x.std(), rel=0.05)


def test_moving_average_oracle():
    x = np.random.default_rng(1).normal(size=37)
    for P in (1, 2, 5, 10):
        out = moving_average(x, P)
        for i in range(len(x)):
            room = min(i, len(x) - 1 - i)
            lo, hi = i - min((P - 1) // 2, room), i + min(P // 2, room)
            assert out[i] == pytest.approx(x[lo:hi + 1].mean(), abs=1e-12)


def test_detrend_polynomial_removes_polynomials():
    t = np.linspace(0, 7, 1024)
    for d in (0, 3, 15):
        coef = np.random.default_rng(d).normal(size=d + 1)
        poly = np.polynomial.Polynomial(coef, domain=[0, 7])(t)
        for degree in (d, 15):
            assert np.max(np.abs(detrend_polynomial(poly, degree))) < 1e-8


def test_detrend_polynomial_residual_orthogonal_to_fit_space():
    x = np.random.default_rng(3).normal(size=500).cumsum()
    r = detrend_polynomial(x, 4)
    t = np.linspace(-1, 1, 500)
    basis = np.vander(t, 5)
    assert np.max(np.abs(basis.T @ r)) < 1e-8


def test_detrend_moving_average():
    x = np.random.default_rng(0).normal(size=200)
    assert np.array_equal(detrend_moving_average(x, 0), x)
    assert np.allclose(detrend_moving_average(x, 10), x - moving_average(x, 10))
    with pytest.raises(InvalidSpecError):
        detrend_moving_average(x, 200)
    with pytest.raises(InvalidSpecError):
        detrend_polynomial(x[:5], 5)


def test_detrend_dispatch():
    data = _henon()
    assert detrend(data, "none") is data
    out = detrend(data, "polynomial", 15)
    assert isinstance(out, MultivariateSeries) and out.labels == data.labels
    assert np.allclose(out.values[:, 1], detrend_polynomial(data.values[:, 1], 15))
    with pytest.raises(InvalidSpecError):
        detrend(data, "wavelet", 3)


# --- persistence ----------------------------------------------------------------------


def test_write_dataset(tmp_path):
    sim = gen_coupled_henon(HenonSpec(K=3, N=64), seed=9)
    csv_path, side = write_dataset(sim, tmp_path / "henon.csv")
    back = read_csv(csv_path)
    assert np.array_equal(back.values, sim.data.values)
    meta = json.loads(side.read_text())
    assert meta["seed"] == 9 and meta["system"] == "HenonSpec"
    assert sorted(map(tuple, meta["edges"])) == [("X1", "X2"), ("X3", "X2")]
    assert meta["spec"]["C"] == 0.2
