"""Stochastic convolutions of the heat semigroup and wave propagator against
subordinate cylindrical Brownian noise, and the matching renormalization
constants.

Every kind is propagated mode by mode with its exact one-step propagator.
Jumps of ``L`` land on grid points, where the kernel is evaluated at lag
zero; between jumps the drift part of the noise enters through the exact
Gaussian law of the within-cell kernel integrals, conditioned on the stored
increment of ``beta^l(L)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _rng
from .errors import GridError, ParameterError, StationarityUnsupportedError
from .pathint import ModeNoise, ball_mask, make_timegrid, mode_grid, sample_mode_noise
from .spectral import SpectralField
from .subordinator import (
    SubordinatorPath,
    SubordinatorSpec,
    check_log_moment,
    sample_subordinator,
    two_sided_path,
)

KINDS = ("heat", "wave", "heat-stationary", "damped-wave-stationary")
WAVE_KINDS = ("wave", "damped-wave-stationary")
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class StochasticConvolution:
    """Mode coefficients of the convolution at ``times``.

    ``coeffs`` (and ``dcoeffs``, the time derivative for wave kinds) have shape
    ``(n_samples, n_times, 2N+1, 2N+1)``. Values are right-continuous; the
    left limit at a grid time is available through :meth:`left_limit`.
    """

    kind: str
    cutoff: int
    times: np.ndarray
    coeffs: np.ndarray
    dcoeffs: Optional[np.ndarray] = None
    jump_part: Optional[np.ndarray] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.coeffs.shape[0]

    def field(self, i: int, sample: int = 0) -> SpectralField:
        return SpectralField(self.cutoff, self.coeffs[sample, i])

    def dfield(self, i: int, sample: int = 0) -> SpectralField:
        if self.dcoeffs is None:
            raise ParameterError(f"{self.kind} convolution has no time derivative")
        return SpectralField(self.cutoff, self.dcoeffs[sample, i])

    def left_limit(self, i: int, derivative: bool = False) -> np.ndarray:
        """Coefficients just before ``times[i]`` for every sample."""
        arr = self.dcoeffs if derivative else self.coeffs
        if self.jump_part is None:
            return arr[:, i]
        # only the heat value and the wave derivative jump
        jumps = self.kind not in WAVE_KINDS or derivative
        return arr[:, i] - self.jump_part[:, i] if jumps else arr[:, i]

    def values_at(self, x=(0.0, 0.0)) -> np.ndarray:
        """Real field values at the point ``x``, shape ``(n_samples, n_times)``."""
        l1, l2 = mode_grid(self.cutoff)
        phase = np.exp(1j * (l1 * x[0] + l2 * x[1]))
        return np.real(np.sum(self.coeffs * phase, axis=(-2, -1)))

    def restrict_times(self, times) -> "StochasticConvolution":
        idx = _time_index(self.times, times)
        sub = lambda a: None if a is None else a[:, idx]
        return StochasticConvolution(self.kind, self.cutoff, self.times[idx], self.coeffs[:, idx],
                                     sub(self.dcoeffs), sub(self.jump_part), dict(self.meta))

    def to_table(self, sample: int = 0) -> str:
        """Time-stamped field table: ``t l1 l2 re im [dre dim]`` per ball mode."""
        lines = [f"# kind {self.kind}", f"# cutoff {self.cutoff}"]
        l1, l2 = mode_grid(self.cutoff)
        m = ball_mask(self.cutoff)
        for i, t in enumerate(self.times):
            c = self.coeffs[sample, i][m]
            d = None if self.dcoeffs is None else self.dcoeffs[sample, i][m]
            for j, (a, b) in enumerate(zip(l1[m], l2[m])):
                row = f"{t:.17g} {a} {b} {c[j].real:.17g} {c[j].imag:.17g}"
                if d is not None:
                    row += f" {d[j].real:.17g} {d[j].imag:.17g}"
                lines.append(row)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_table(cls, text: str) -> "StochasticConvolution":
        head, rows = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                _, key, val = line.split()
                head[key] = val
            elif line.strip():
                rows.append(line.split())
        kind, cutoff = head["kind"], int(head["cutoff"])
        times = np.unique([float(r[0]) for r in rows])
        size = 2 * cutoff + 1
        c = np.zeros((1, times.size, size, size), dtype=complex)
        d = np.zeros_like(c) if kind in WAVE_KINDS else None
        for r in rows:
            i = np.searchsorted(times, float(r[0]))
            a, b = int(r[1]) + cutoff, int(r[2]) + cutoff
            c[0, i, a, b] = float(r[3]) + 1j * float(r[4])
            if d is not None:
                d[0, i, a, b] = float(r[5]) + 1j * float(r[6])
        return cls(kind, cutoff, times, c, d)


@dataclass(frozen=True)
class RenormConstants:
    kind: str
    cutoff: int
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def at(self, t) -> np.ndarray:
        return self.values[_time_index(self.times, t)]

    def to_text(self) -> str:
        lines = [f"# kind {self.kind}", f"# cutoff {self.cutoff}"]
        lines += [f"{t:.17g} {c:.17g}" for t, c in zip(self.times, self.values)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RenormConstants":
        head, rows = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                _, key, val = line.split()
                head[key] = val
            elif line.strip():
                rows.append([float(v) for v in line.split()])
        rows = np.asarray(rows, dtype=float).reshape(-1, 2)
        return cls(head["kind"], int(head["cutoff"]), rows[:, 0], rows[:, 1])


def _time_index(grid, times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    idx = np.searchsorted(grid, times)
    idx_c = np.minimum(idx, grid.size - 1)
    if np.any(grid[idx_c] != times):
        raise GridError("requested output times are not points of the noise grid")
    return idx_c


# -- per-mode kernels ------------------------------------------------------------

def _freq(kind: str, cutoff: int) -> np.ndarray:
    """``|l|^2`` plus the mass of the kind, on the mode box."""
    l1, l2 = mode_grid(cutoff)
    lam = (l1 * l1 + l2 * l2).astype(float)
    if kind == "heat-stationary":
        return lam + 1.0
    if kind == "damped-wave-stationary":
        return lam + 0.75
    return lam


def _sinc(x):
    return np.sinc(np.asarray(x) / math.pi)


def _sin_sq_moment(theta):
    """``(2 theta - sin 2 theta) / (4 theta^3)``, stable near zero."""
    theta = np.asarray(theta, dtype=float)
    small = theta < 1e-2
    ts = np.where(small, 1.0, theta)
    exact = (2 * ts - np.sin(2 * ts)) / (4 * ts ** 3)
    t2 = theta * theta
    series = 1.0 / 3.0 - t2 / 15.0 + 2.0 * t2 * t2 / 315.0
    return np.where(small, series, exact)


def _heat_cell(lam, delta):
    """Propagator and drift moments ``(mean kernel, mean squared kernel)`` per unit time."""
    x = lam * delta
    xs = np.where(x > 0, x, 1.0)
    g1 = np.where(x > 0, -np.expm1(-xs) / xs, 1.0)
    g2 = np.where(x > 0, -np.expm1(-2 * xs) / (2 * xs), 1.0)
    return np.exp(-x), g1 * delta, g2 * delta


def _wave_cell(lam, delta):
    """Rotation propagator and the drift covariance of ``(dbeta, A, B)``.

    ``A`` and ``B`` integrate ``sin(w u)/w`` and ``cos(w u)`` over the cell.
    """
    w = np.sqrt(lam)
    th = w * delta
    c, s = np.cos(th), np.sin(th)
    sw = delta * _sinc(th)  # sin(w d)/w, equal to d at w=0
    prop = np.array([[c, sw], [-w * w * sw, c]])
    half = 0.5 * th
    m_a = 0.5 * delta ** 2 * _sinc(half) ** 2  # (1 - cos)/w^2
    m_b = sw
    v_aa = delta ** 3 * _sin_sq_moment(th)
    v_ab = 0.5 * sw * sw
    v_bb = delta - w * w * v_aa
    cov = np.array([[delta * np.ones_like(th), m_a, m_b],
                    [m_a, v_aa, v_ab],
                    [m_b, v_ab, v_bb]])
    return prop, cov


_GL_CACHE = {}


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _damped_kernels(w, u):
    e = np.exp(-0.5 * u)
    s, c = np.sin(w * u), np.cos(w * u)
    return e * s / w, e * (c - 0.5 * s / w)


def _damped_cell(lam, delta):
    """Damped-wave propagator (roots ``-1/2 +- i w``) and drift covariance via Gauss-Legendre."""
    w = np.sqrt(lam)
    th = w * delta
    e = math.exp(-0.5 * delta)
    c, s = np.cos(th), np.sin(th)
    prop = e * np.array([[c + 0.5 * s / w, s / w], [-(w * w + 0.25) * s / w, c - 0.5 * s / w]])
    n = 32 + 2 * int(math.ceil(float(np.max(th))))
    x, wt = _gauss_legendre(n)
    u = 0.5 * delta * (x + 1.0)
    wt = 0.5 * delta * wt
    a, b = _damped_kernels(w[..., None], u)
    one = np.ones_like(a)
    k = [one, a, b]
    cov = np.array([[np.sum(wt * k[i] * k[j], axis=-1) for j in range(3)] for i in range(3)])
    return prop, cov


def _conditional(cov, drift_rate):
    """Regression weights on ``dbeta`` and a lower Cholesky factor of the residual."""
    c00 = cov[0, 0]
    reg = cov[1:, 0] / c00
    r = cov[1:, 1:] - np.einsum("i...,j...->ij...", cov[1:, 0], cov[1:, 0]) / c00
    r = r * drift_rate
    l11 = np.sqrt(np.maximum(r[0, 0], 0.0))
    l21 = np.where(l11 > 0, r[1, 0] / np.where(l11 > 0, l11, 1.0), 0.0)
    l22 = np.sqrt(np.maximum(r[1, 1] - l21 * l21, 0.0))
    return reg, (l11, l21, l22)


# -- convolutions -----------------------------------------------------------------

def _convolve(kind: str, noise: ModeNoise, timegrid=None) -> StochasticConvolution:
    if kind not in KINDS:
        raise ParameterError(f"unknown convolution kind {kind!r}")
    out_idx = np.arange(noise.times.size) if timegrid is None else _time_index(noise.times, timegrid)
    lam = _freq(kind, noise.cutoff)
    mask = ball_mask(noise.cutoff)
    b = noise.path.drift
    dt = np.diff(noise.times)
    wave = kind in WAVE_KINDS
    shape = (noise.n_samples,) + lam.shape
    val = np.zeros(shape, dtype=complex)
    der = np.zeros(shape, dtype=complex) if wave else None
    n_aux = 2 if wave else 1
    aux = noise.auxiliary(kind, n_aux) if b > 0 else None

    keep = np.zeros(noise.times.size, dtype=bool)
    keep[out_idx] = True
    pos = np.cumsum(keep) - 1
    size = (noise.n_samples, out_idx.size) + lam.shape
    vals = np.zeros(size, dtype=complex)
    ders = np.zeros(size, dtype=complex) if wave else None
    jumps = np.zeros(size, dtype=complex)
    cache = {}
    for i, delta in enumerate(dt):
        if delta not in cache:
            if kind in ("heat", "heat-stationary"):
                cache[delta] = _heat_cell(lam, delta)
            else:
                cell = (_wave_cell if kind == "wave" else _damped_cell)(lam, delta)
                cache[delta] = cell + _conditional(cell[1], b)
        dbeta = noise.drift_increments[:, i]
        xi = noise.jump_increments[:, i] / TWO_PI
        if not wave:
            decay, g1, g2 = cache[delta]
            val = decay * val
            if b > 0:
                reg = g1 / delta
                cond = np.sqrt(np.maximum(b * (g2 - g1 * g1 / delta), 0.0))
                val = val + (reg * dbeta + cond * aux[0, :, i]) / TWO_PI
            val = val + xi
        else:
            prop, _, reg, (l11, l21, l22) = cache[delta]
            val, der = prop[0, 0] * val + prop[0, 1] * der, prop[1, 0] * val + prop[1, 1] * der
            if b > 0:
                z1, z2 = aux[0, :, i], aux[1, :, i]
                val = val + (reg[0] * dbeta + l11 * z1) / TWO_PI
                der = der + (reg[1] * dbeta + l21 * z1 + l22 * z2) / TWO_PI
            der = der + xi
        if keep[i + 1]:
            vals[:, pos[i + 1]] = val * mask
            jumps[:, pos[i + 1]] = xi
            if wave:
                ders[:, pos[i + 1]] = der * mask
    meta = {"seed": noise.seed, "path_kind": noise.path.kind}
    return StochasticConvolution(kind, noise.cutoff, noise.times[out_idx], vals, ders, jumps, meta)


def heat_convolution(noise: ModeNoise, timegrid=None) -> StochasticConvolution:
    """``Phi_N(t) = int_0^t e^{(t-s) Laplacian} dW_L(s)`` at the requested noise-grid times."""
    return _convolve("heat", noise, timegrid)


def wave_convolution(noise: ModeNoise, timegrid=None) -> StochasticConvolution:
    """``Psi_N(t) = int_0^t sin((t-s)|grad|)/|grad| dW_L(s)`` and its time derivative."""
    return _convolve("wave", noise, timegrid)


# -- renormalization constants ----------------------------------------------------

def _shells(kind: str, cutoff: int):
    """Distinct ``|l|^2 + mass`` values in the ball with their multiplicities."""
    lam = _freq(kind, cutoff)[ball_mask(cutoff)]
    vals, counts = np.unique(lam, return_counts=True)
    return vals, counts


def _sq_kernel_integral(kind, lam, tau):
    """``int_0^tau K(u)^2 du`` per shell, broadcasting ``lam[:, None]`` against ``tau``."""
    tau = np.asarray(tau, dtype=float)
    if kind in ("heat", "heat-stationary"):
        x = 2.0 * lam * tau
        xs = np.where(x > 0, x, 1.0)
        return np.where(x > 0, -np.expm1(-xs) / xs, 1.0) * tau
    if kind == "wave":
        return tau ** 3 * _sin_sq_moment(np.sqrt(lam) * tau)
    w = np.sqrt(lam)
    a = 2.0 * w
    et = np.exp(-tau)
    osc = (et * (a * np.sin(a * tau) - np.cos(a * tau)) + 1.0) / (1.0 + a * a)
    return 0.5 * (-np.expm1(-tau) - osc) / (w * w)


def _sq_kernel(kind, lam, u):
    u = np.asarray(u, dtype=float)
    if kind in ("heat", "heat-stationary"):
        return np.exp(-2.0 * lam * u)
    if kind == "wave":
        w = np.sqrt(lam)
        return (u * _sinc(w * u)) ** 2
    k, _ = _damped_kernels(np.sqrt(lam), u)
    return k * k


def renorm_constants(kind: str, path: SubordinatorPath, cutoff: int, timegrid,
                     origin: float = 0.0) -> RenormConstants:
    """``c(t) = (2 pi)^-2 sum_{|l|<=N} int_0^t K_l(t-s)^2 dL(s)`` at ``origin + t``.

    ``origin`` shifts the evaluation times into the path's clock (used by the
    stationary kinds, whose path starts ``T_past`` before time zero).
    """
    if kind not in KINDS:
        raise ParameterError(f"unknown kind {kind!r}")
    times = np.asarray(timegrid, dtype=float)
    lam, mult = _shells(kind, cutoff)
    tau = origin + times
    drift = path.drift * _sq_kernel_integral(kind, lam[:, None], tau[None, :])
    lags = tau[:, None] - path.jump_times[None, :]
    w = np.where(lags >= 0, path.jump_sizes[None, :], 0.0)
    jumps = np.einsum("tj,ltj->lt", w, _sq_kernel(kind, lam[:, None, None], np.maximum(lags, 0.0)[None]))
    per_shell = drift + jumps
    values = mult @ per_shell / TWO_PI ** 2
    return RenormConstants(kind, cutoff, times, np.maximum(values, 0.0))


def integrated_heat_constant(cutoff: int, horizon: float, drift: float = 1.0) -> float:
    """``int_0^T c_N(t) dt`` for the heat kind with ``L(t) = b t``, in closed form."""
    lam, mult = _shells("heat", cutoff)
    T = horizon
    pos = lam > 0
    lp = lam[pos]
    per = np.empty_like(lam)
    per[pos] = T / (2 * lp) + np.expm1(-2 * T * lp) / (4 * lp * lp)
    per[~pos] = 0.5 * T * T
    return float(drift * mult @ per / TWO_PI ** 2)


# -- stationary solutions ---------------------------------------------------------

def stationary_convolution(kind: str, spec: SubordinatorSpec, cutoff: int, timegrid,
                           past_horizon: float = 8.0, seed: int = 0, n_samples: int = 1):
    """Stationary convolution sampled on ``timegrid`` (times in ``[0, T]``).

    The past ``[-T_past, 0]`` carries an independent copy of ``L``; the
    integral is truncated at ``-T_past``. Returns the convolution and the
    stationary constants over the same window; ``meta['bias_bound']`` bounds
    the truncated second-moment mass per unit of expected ``L``-rate.
    """
    if kind not in ("heat-stationary", "damped-wave-stationary"):
        raise ParameterError(f"{kind!r} is not a stationary kind")
    if not past_horizon > 0:
        raise ParameterError("past horizon T_past must be > 0")
    lm = check_log_moment(spec)
    if not lm.finite:
        raise StationarityUnsupportedError(
            "Levy measure fails the log-moment condition int_{x>1} log x rho(dx) < inf; "
            "no stationary distribution exists")
    times = np.asarray(timegrid, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise GridError("stationary output times must be increasing and >= 0")
    horizon = float(times[-1]) if times[-1] > 0 else 1.0
    root = _rng.stream(seed, "stationary", kind)
    past_seed, future_seed, noise_seed = (int(v) for v in root.integers(0, 2 ** 62, size=3))
    if spec.kind == "custom":
        raise StationarityUnsupportedError("custom Levy measures carry no sampler")
    past = sample_subordinator(spec, past_horizon, past_seed)
    future = sample_subordinator(spec, horizon, future_seed)
    path = two_sided_path(past, future)
    shifted = past_horizon + times
    grid = make_timegrid(path, 1, extra=shifted)
    noise = sample_mode_noise(path, cutoff, grid, noise_seed, n_samples)
    conv = _convolve(kind, noise, shifted)
    decay = 2.0 if kind == "heat-stationary" else 1.0
    try:
        rate = spec.mean_rate()
    except Exception:
        rate = math.nan
    meta = {"past_horizon": past_horizon, "bias_bound": math.exp(-decay * past_horizon) * rate,
            "seed": seed, "log_moment": lm.value}
    conv = StochasticConvolution(kind, cutoff, times, conv.coeffs, conv.dcoeffs, conv.jump_part,
                                 {**conv.meta, **meta})
    consts = renorm_constants(kind, path, cutoff, times, origin=past_horizon)
    consts = RenormConstants(kind, cutoff, times, consts.values, meta)
    return conv, consts
