import math

import numpy as np
import pytest

from wickspde.errors import GridError, StationarityUnsupportedError
from wickspde.linfield import (
    RenormConstants,
    StochasticConvolution,
    heat_convolution,
    integrated_heat_constant,
    renorm_constants,
    stationary_convolution,
    wave_convolution,
)
from wickspde.pathint import make_timegrid, mode_grid, sample_mode_noise
from wickspde.subordinator import SubordinatorPath, SubordinatorSpec, sample_subordinator, stieltjes_integral

TWO_PI = 2 * math.pi


def jump_path(s0=0.3, size=1.5):
    return SubordinatorPath(1.0, 0.0, np.array([s0]), np.array([size]))


def linear_path(b=1.0, T=1.0):
    return SubordinatorPath(T, b, np.empty(0), np.empty(0))


def test_zero_noise_gives_zero_fields():
    path = SubordinatorPath(1.0, 0.0, np.empty(0), np.empty(0))
    noise = sample_mode_noise(path, 3, np.linspace(0, 1, 5), seed=0)
    assert np.all(heat_convolution(noise).coeffs == 0)
    w = wave_convolution(noise)
    assert np.all(w.coeffs == 0) and np.all(w.dcoeffs == 0)


def test_single_jump_closed_forms():
    s0 = 0.3
    path = jump_path(s0)
    grid = make_timegrid(path, 20)
    noise = sample_mode_noise(path, 4, grid, seed=1)
    xi = noise.jump_increments[0, np.searchsorted(grid, s0) - 1]
    l1, l2 = mode_grid(4)
    lam = (l1 ** 2 + l2 ** 2).astype(float)
    w = np.sqrt(lam)
    heat, wave = heat_convolution(noise), wave_convolution(noise)
    for i, t in enumerate(grid):
        lag = t - s0
        if lag < 0:
            assert np.all(heat.coeffs[0, i] == 0) and np.all(wave.coeffs[0, i] == 0)
            continue
        np.testing.assert_allclose(heat.coeffs[0, i], np.exp(-lag * lam) * xi / TWO_PI, atol=1e-12)
        sinc = np.where(w > 0, np.sin(w * lag) / np.where(w > 0, w, 1), lag)
        np.testing.assert_allclose(wave.coeffs[0, i], sinc * xi / TWO_PI, atol=1e-12)
        np.testing.assert_allclose(wave.dcoeffs[0, i], np.cos(w * lag) * xi / TWO_PI, atol=1e-12)


def test_jump_continuity():
    path = sample_subordinator(SubordinatorSpec("poisson", rate=5.0), 1.0, 2)
    grid = make_timegrid(path, 10)
    noise = sample_mode_noise(path, 3, grid, seed=4)
    heat, wave = heat_convolution(noise), wave_convolution(noise)
    for s in path.jump_times:
        i = np.searchsorted(grid, s)
        xi = noise.jump_increments[:, i - 1] / TWO_PI
        np.testing.assert_allclose(heat.coeffs[:, i] - heat.left_limit(i), xi, atol=1e-14)
        assert np.array_equal(wave.coeffs[:, i], wave.left_limit(i))
        np.testing.assert_allclose(wave.dcoeffs[:, i] - wave.left_limit(i, derivative=True), xi, atol=1e-14)


def test_heat_mode_variance_linear_L():
    t, l = 0.4, (1, 0)
    path = linear_path()
    noise = sample_mode_noise(path, 1, np.array([0.0, t, 1.0]), seed=3, n_samples=100_000)
    phi = heat_convolution(noise, [t]).coeffs[:, 0, 1 + l[0], 1 + l[1]]
    v = np.abs(phi) ** 2
    lam = 1.0
    want = (1 - math.exp(-2 * t * lam)) / (2 * lam) / TWO_PI ** 2
    assert abs(v.mean() - want) < 4 * v.std(ddof=1) / math.sqrt(v.size)


def test_output_times_must_be_on_grid():
    path = linear_path()
    noise = sample_mode_noise(path, 1, np.linspace(0, 1, 5), seed=0)
    with pytest.raises(GridError):
        heat_convolution(noise, [0.3])


def test_constants_examples():
    N = 6
    path = linear_path()
    ts = np.array([0.0, 0.2, 0.9])
    c = renorm_constants("heat", path, N, ts).values
    assert c[0] == 0
    l1, l2 = mode_grid(N)
    lam = (l1 ** 2 + l2 ** 2)[l1 ** 2 + l2 ** 2 <= N * N].astype(float)
    for t, got in zip(ts[1:], c[1:]):
        per = np.where(lam > 0, -np.expm1(-2 * t * lam) / (2 * np.where(lam > 0, lam, 1)), t)
        assert got == pytest.approx(per.sum() / TWO_PI ** 2, rel=1e-12)


def test_constants_match_stieltjes():
    N, t = 3, 0.8
    path = sample_subordinator(SubordinatorSpec("compound-poisson", drift=0.4, rate=3.0, jump_law="uniform"), 1.0, 5)
    l1, l2 = mode_grid(N)
    mask = l1 ** 2 + l2 ** 2 <= N * N
    for kind, ker in (("heat", lambda w, u: math.exp(-w * w * u)),
                      ("wave", lambda w, u: math.sin(w * u) / w if w > 0 else u)):
        total = sum(stieltjes_integral(lambda s: ker(math.hypot(a, b), t - s) ** 2, path, 0.0, t)
                    for a, b in zip(l1[mask], l2[mask]))
        got = renorm_constants(kind, path, N, [t]).values[0]
        assert got == pytest.approx(total / TWO_PI ** 2, rel=1e-8)


def test_integrated_constant_matches_direct_sum():
    N, T = 10, 0.7
    l1, l2 = mode_grid(N)
    lam = (l1 ** 2 + l2 ** 2)[l1 ** 2 + l2 ** 2 <= N * N].astype(float)
    pos = lam[lam > 0]
    direct = np.sum(T / (2 * pos) - (1 - np.exp(-2 * pos * T)) / (4 * pos ** 2)) + T * T / 2
    assert integrated_heat_constant(N, T) == pytest.approx(direct / TWO_PI ** 2, rel=1e-12)


def test_constants_equal_field_variance():
    N, t = 8, 0.5
    path = sample_subordinator(SubordinatorSpec("poisson", rate=1.0), 1.0, 3)
    assert path.jump_times[0] < t
    grid = make_timegrid(path, 2, extra=[t])
    for kind, conv in (("heat", heat_convolution), ("wave", wave_convolution)):
        x = np.concatenate([conv(sample_mode_noise(path, N, grid, s, 2000), [t]).values_at((0.4, 2.0))[:, 0]
                            for s in range(5)])
        v = x ** 2
        c = renorm_constants(kind, path, N, [t]).values[0]
        assert abs(v.mean() - c) < 4 * v.std(ddof=1) / math.sqrt(v.size)


def test_serialization_roundtrip():
    path = sample_subordinator(SubordinatorSpec("poisson", rate=3.0), 1.0, 1)
    noise = sample_mode_noise(path, 2, make_timegrid(path, 4), seed=2)
    w = wave_convolution(noise)
    back = StochasticConvolution.from_table(w.to_table())
    np.testing.assert_array_equal(back.coeffs[0], w.coeffs[0])
    np.testing.assert_array_equal(back.dcoeffs[0], w.dcoeffs[0])
    c = renorm_constants("wave", path, 2, noise.times)
    back_c = RenormConstants.from_text(c.to_text())
    np.testing.assert_array_equal(back_c.values, c.values)


def test_stationary_heat_limit():
    N = 4
    spec = SubordinatorSpec("deterministic-linear", drift=1.0)
    _, c5 = stationary_convolution("heat-stationary", spec, N, [0.0, 0.5], past_horizon=5.0)
    _, c10 = stationary_convolution("heat-stationary", spec, N, [0.0, 0.5], past_horizon=10.0)
    l1, l2 = mode_grid(N)
    lam = (l1 ** 2 + l2 ** 2)[l1 ** 2 + l2 ** 2 <= N * N]
    limit = np.sum(1 / (2 * (lam + 1.0))) / TWO_PI ** 2
    np.testing.assert_allclose(c5.values, c10.values, atol=1e-6)
    np.testing.assert_allclose(c10.values, limit, rtol=1e-8)


def test_stationary_zero_measure():
    spec = SubordinatorSpec("deterministic-linear", drift=0.0)
    for kind in ("heat-stationary", "damped-wave-stationary"):
        conv, c = stationary_convolution(kind, spec, 3, [0.0, 1.0])
        assert np.all(conv.coeffs == 0) and np.all(c.values == 0)


def test_stationary_damped_wave_zero_mode_constant():
    spec = SubordinatorSpec("deterministic-linear", drift=1.0)
    _, c = stationary_convolution("damped-wave-stationary", spec, 0, [0.5], past_horizon=30.0)
    # int_0^inf (e^{-u/2} sin(u w)/w)^2 du with w^2 = 3/4 equals 1/2
    assert c.values[0] * TWO_PI ** 2 == pytest.approx(0.5, rel=1e-10)


def test_stationary_second_moment():
    spec = SubordinatorSpec("gamma")
    a, b = [], []
    for s in range(1500):
        conv, _ = stationary_convolution("heat-stationary", spec, 1, [0.5, 1.5], past_horizon=6.0, seed=s)
        z = np.abs(conv.coeffs[0, :, 2, 1]) ** 2
        a.append(z[0])
        b.append(z[1])
    d = np.asarray(a) - np.asarray(b)
    assert abs(d.mean()) < 4 * d.std(ddof=1) / math.sqrt(d.size)


def test_stationary_refuses_divergent_log_moment():
    custom = SubordinatorSpec("custom", levy_density=lambda x: 1 / (x * math.log(x) ** 2), support=(math.e, math.inf))
    with pytest.raises(StationarityUnsupportedError):
        stationary_convolution("heat-stationary", custom, 2, [0.0, 1.0])
