import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import comb

from wickspde.errors import ConstraintError, EnsembleTooSmallError, PairingError
from wickspde.linfield import RenormConstants, StochasticConvolution, heat_convolution, renorm_constants, wave_convolution
from wickspde.pathint import make_timegrid, sample_mode_noise
from wickspde.spectral import SpectralField, field_product
from wickspde.subordinator import SubordinatorSpec, sample_subordinator
from wickspde.wick import (
    ConvergenceReport,
    NormSpec,
    cauchy_convergence_study,
    covariance_diagnostic,
    hermite,
    wick_power,
)


def test_hermite_low_orders():
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(hermite(2, x), x ** 2 - 1)
    np.testing.assert_allclose(hermite(3, x), x ** 3 - 3 * x)
    np.testing.assert_allclose(hermite(2, x, 0.7), x ** 2 - 0.7)
    np.testing.assert_array_equal(hermite(4, x, 0.0), x ** 4)


def _majorant(k, x, s2):
    # coefficients of H_k in absolute value: generating function exp(t|x| + s2 t^2 / 2)
    h_prev, h = 1.0, abs(x)
    if k == 0:
        return h_prev
    for j in range(1, k):
        h_prev, h = h, abs(x) * h + j * s2 * h_prev
    return h


@given(st.floats(-0.5, 0.5), st.floats(-2, 2), st.floats(0, 2))
def test_generating_function(t, x, s2):
    partial = sum(t ** k / math.factorial(k) * float(hermite(k, x, s2)) for k in range(7))
    exact = math.exp(t * x - s2 * t * t / 2)
    a = abs(t)
    tail = math.exp(a * abs(x) + s2 * a * a / 2) - sum(a ** k / math.factorial(k) * _majorant(k, x, s2)
                                                       for k in range(7))
    assert abs(partial - exact) <= tail * (1 + 1e-9) + 1e-15


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 2), st.integers(0, 5))
def test_binomial_identity(a, b, c, k):
    lhs = float(hermite(k, a + b, c))
    rhs = sum(comb(k, l, exact=True) * a ** (k - l) * float(hermite(l, b, c)) for l in range(k + 1))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def _fields(kind, N=4, t=0.5, n=400, seed=2, rate=3.0):
    path = sample_subordinator(SubordinatorSpec("poisson", rate=rate), 1.0, seed)
    assert path.n_jumps and path.jump_times[0] < t
    grid = make_timegrid(path, 4, extra=[t])
    noise = sample_mode_noise(path, N, grid, seed + 1, n)
    conv = (heat_convolution if kind == "heat" else wave_convolution)(noise, [t])
    return conv, renorm_constants(kind, path, N, [t])


def test_wick_square_is_product_minus_constant():
    conv, consts = _fields("heat", n=3)
    w2 = wick_power(conv, consts, 2)
    for s in range(3):
        f = conv.field(0, s)
        want = field_product(f, f) - consts.values[0]
        assert SpectralField(w2.output_cutoff, w2.coeffs[s, 0]).allclose(want, atol=1e-13)


def test_wick_cube_matches_pointwise_hermite():
    conv, consts = _fields("wave", N=3, n=2)
    w3 = wick_power(conv, consts, 3)
    x = (0.37, 1.9)
    direct = hermite(3, conv.values_at(x)[:, 0], consts.values[0])
    l = np.arange(-9, 10)
    phase = np.exp(1j * (l[:, None] * x[0] + l[None, :] * x[1]))
    np.testing.assert_allclose(np.real(np.sum(w3.coeffs[:, 0] * phase, axis=(-2, -1))), direct, atol=1e-12)


@pytest.mark.parametrize("kind", ["heat", "wave"])
def test_wick_mean_zero(kind):
    conv, consts = _fields(kind, N=4, n=4000)
    for k in (1, 2, 3):
        m = wick_power(conv, consts, k).mean()[:, 0]
        assert abs(m.mean()) < 4 * m.std(ddof=1) / math.sqrt(m.size)


def test_pairing_checks():
    conv, consts = _fields("heat", n=2)
    wrong = RenormConstants("wave", consts.cutoff, consts.times, consts.values)
    with pytest.raises(PairingError):
        wick_power(conv, wrong, 2)
    wrong = RenormConstants("heat", consts.cutoff + 1, consts.times, consts.values)
    with pytest.raises(PairingError):
        wick_power(conv, wrong, 2)


def test_covariance_examples():
    conv, consts = _fields("heat", N=4, n=20_000, rate=1.0, seed=2)
    x = conv.values_at((0.0, 0.0))[:, 0]
    c = consts.values[0]
    for k, m in ((1, 2), (2, 3), (1, 3)):
        rec = covariance_diagnostic(x, x, hermite(k, x, c), hermite(m, x, c), k, m)
        assert rec.predicted == 0 and rec.within(4)
    rec = covariance_diagnostic(x, x, x, x, 1, 1)
    assert rec.estimate == rec.predicted
    rec = covariance_diagnostic(x, x, hermite(2, x, c), hermite(2, x, c), 2, 2)
    assert rec.within(4)
    with pytest.raises(EnsembleTooSmallError):
        covariance_diagnostic(x[:50], x[:50], x[:50], x[:50], 1, 1)


def test_windows():
    with pytest.raises(ConstraintError, match="2/\\(\\(1−ε\\)k\\)"):
        cauchy_convergence_study("heat", 3, [2, 4], NormSpec(-0.5, gamma=1.0, eps=0.1), 1, 0)
    with pytest.raises(ConstraintError):
        cauchy_convergence_study("heat", 2, [2, 4], NormSpec(-0.1, gamma=1.0, eps=0.1), 1, 0)
    with pytest.raises(ConstraintError):
        cauchy_convergence_study("heat", 2, [2, 4], NormSpec(-0.5, gamma=None), 1, 0)
    with pytest.raises(ConstraintError):
        cauchy_convergence_study("wave", 3, [2, 4], NormSpec(0.1), 1, 0)
    rep = cauchy_convergence_study("wave", 3, [2], NormSpec(-0.5), 1, 0, n_times=4)
    assert np.all(np.isfinite(rep.diffs))


def test_linear_study_is_tail_of_mode_sum():
    rep = cauchy_convergence_study("heat", 1, [2, 4, 8], NormSpec(-0.5, gamma=1.0, eps=0.1), 4, 3,
                                   spec=SubordinatorSpec("poisson", drift=0.5, rate=3.0), n_times=8)
    assert np.all(rep.diffs > 0)
    assert np.all(np.diff(rep.means) < 0)


def test_study_is_reproducible_and_serializes():
    a = cauchy_convergence_study("heat", 2, [2, 4], NormSpec(-0.5, gamma=1.0), 2, 7, n_times=5)
    b = cauchy_convergence_study("heat", 2, [2, 4], NormSpec(-0.5, gamma=1.0), 2, 7, n_times=5)
    np.testing.assert_array_equal(a.diffs, b.diffs)
    lines = a.to_csv().split("\r\n")
    assert lines[0] == "kind,k,N,sample,norm_value" and len(lines) == 1 + 4 + 1
    assert '"slope"' in a.to_json()


def test_report_rejects_bad_values():
    with pytest.raises(Exception):
        ConvergenceReport("heat", 2, [2], NormSpec(-0.5, 1.0), np.array([[math.nan]]))
