"""Hermite polynomials, Wick powers of convolution fields, and Monte-Carlo
diagnostics for their covariance structure and Cauchy convergence in ``N``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _rng
from .errors import ConstraintError, EnsembleTooSmallError, PairingError, ParameterError
from .linfield import (
    RenormConstants,
    StochasticConvolution,
    heat_convolution,
    renorm_constants,
    wave_convolution,
)
from .pathint import make_timegrid, sample_mode_noise
from .spectral import analyze, besov_norms, grid_size, pad_coeffs, synthesize
from .subordinator import SubordinatorSpec, sample_subordinator

MIN_ENSEMBLE = 100


def hermite(k: int, x, sigma2=1.0):
    """``H_k(x; sigma^2)`` by the three-term recurrence; ``sigma^2 = 0`` gives ``x^k``."""
    if k < 0 or int(k) != k:
        raise ParameterError("Hermite order must be a nonnegative integer")
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < 0):
        raise ParameterError("variance parameter must be >= 0")
    x = np.asarray(x, dtype=float)
    h_prev, h = np.ones_like(x), x
    if k == 0:
        return h_prev
    for j in range(1, int(k)):
        h_prev, h = h, x * h - j * sigma2 * h_prev
    return h


@dataclass(frozen=True, eq=False)
class WickPower:
    """``H_k(X_N(t); c_N(t))`` with coefficients at cutoff ``k N``.

    ``coeffs`` has shape ``(n_samples, n_times, 2kN+1, 2kN+1)``.
    """

    kind: str
    order: int
    cutoff: int
    times: np.ndarray
    coeffs: np.ndarray
    constants: RenormConstants

    @property
    def output_cutoff(self) -> int:
        return (self.coeffs.shape[-1] - 1) // 2

    def mean(self) -> np.ndarray:
        """Spatial means, the zero-mode coefficients."""
        c = self.output_cutoff
        return self.coeffs[..., c, c].real


def _check_pairing(conv: StochasticConvolution, constants: RenormConstants):
    if conv.kind != constants.kind:
        raise PairingError(f"convolution kind {conv.kind!r} does not match constants kind {constants.kind!r}")
    if conv.cutoff != constants.cutoff:
        raise PairingError(f"convolution cutoff {conv.cutoff} does not match constants cutoff {constants.cutoff}")
    if conv.times.shape != constants.times.shape or np.any(conv.times != constants.times):
        raise PairingError("convolution and constants live on different time grids")


def wick_power(conv: StochasticConvolution, constants: RenormConstants, k: int) -> WickPower:
    """Exact (dealiased) Wick power of order ``k`` at every sample and time."""
    _check_pairing(conv, constants)
    if k < 1:
        raise ParameterError("Wick order must be >= 1")
    if k == 1:
        return WickPower(conv.kind, 1, conv.cutoff, conv.times, conv.coeffs, constants)
    out = k * conv.cutoff
    n = grid_size(2 * out + 1)
    size = 2 * out + 1
    res = np.empty(conv.coeffs.shape[:2] + (size, size), dtype=complex)
    for i, c in enumerate(constants.values):
        vals = synthesize(pad_coeffs(conv.coeffs[:, i], out), n, real=True)
        res[:, i] = analyze(hermite(k, vals, c), out)
    return WickPower(conv.kind, k, conv.cutoff, conv.times, res, constants)


# -- covariance diagnostic --------------------------------------------------------

@dataclass(frozen=True)
class CovarianceRecord:
    k: int
    m: int
    n: int
    estimate: float
    estimate_se: float
    predicted: float
    predicted_se: float
    base_covariance: float

    @property
    def z_score(self) -> float:
        se = math.hypot(self.estimate_se, self.predicted_se)
        return (self.estimate - self.predicted) / se if se > 0 else 0.0

    def within(self, n_se: float = 4.0) -> bool:
        return abs(self.z_score) <= n_se


def covariance_diagnostic(base_s, base_t, wick_s, wick_t, k: int, m: int) -> CovarianceRecord:
    """Compare ``E[X^k(s,x) X^m(t,y)]`` with ``k! delta_km E[X(s,x) X(t,y)]^k``.

    Inputs are ensemble samples of the base field at the two points and of the
    Wick powers of orders ``k`` and ``m`` at the same points.
    """
    arrays = [np.asarray(a, dtype=float).reshape(-1) for a in (base_s, base_t, wick_s, wick_t)]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ParameterError("ensemble arrays differ in length")
    if n < MIN_ENSEMBLE:
        raise EnsembleTooSmallError(f"ensemble of {n} samples is below the minimum of {MIN_ENSEMBLE}")
    xs, xt, ws, wt = arrays
    prod = ws * wt
    est, est_se = prod.mean(), prod.std(ddof=1) / math.sqrt(n)
    base = xs * xt
    r, r_se = base.mean(), base.std(ddof=1) / math.sqrt(n)
    if k != m:
        pred, pred_se = 0.0, 0.0
    else:
        f = math.factorial(k)
        pred = f * r ** k
        pred_se = f * k * abs(r) ** (k - 1) * r_se
    return CovarianceRecord(k, m, n, float(est), float(est_se), float(pred), float(pred_se), float(r))


# -- Cauchy convergence study -----------------------------------------------------

def check_heat_window(k: int, alpha: float, gamma: float, eps: float):
    """Parameter window for ``L^gamma_t B^alpha`` convergence of heat Wick powers."""
    if not 0 < eps < 1.0 / k:
        raise ConstraintError(f"epsilon must satisfy 0 < epsilon < 1/k = {1.0 / k:.6g}")
    if not alpha < -eps * k:
        raise ConstraintError(f"alpha ≥ -εk violates heat Wick-power regularity window (alpha={alpha}, εk={eps * k})")
    bound = 2.0 / ((1.0 - eps) * k)
    if not 0 < gamma < bound:
        raise ConstraintError(
            f"γ ≥ 2/((1−ε)k) violates heat Wick-power integrability window (γ={gamma}, bound={bound:.6g})")


def check_wave_window(alpha: float):
    if not alpha < 0:
        raise ConstraintError("alpha ≥ 0 violates wave Wick-power regularity window (alpha < 0 required)")


@dataclass(frozen=True)
class NormSpec:
    """Spatial ``B^alpha_{p,q}`` norm and a time norm (``gamma`` or ``None`` for sup)."""

    alpha: float
    gamma: Optional[float] = None
    p: float = math.inf
    q: float = math.inf
    eps: float = 0.1
    oversample: int = 2

    @property
    def time_label(self) -> str:
        return "sup" if self.gamma is None else f"L^{self.gamma:g}"


@dataclass
class ConvergenceReport:
    kind: str
    k: int
    cutoffs: list
    norm: NormSpec
    diffs: np.ndarray  # (n_cutoffs, n_samples)
    slope: float = math.nan
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.diffs = np.asarray(self.diffs, dtype=float)
        if np.any(~np.isfinite(self.diffs)) or np.any(self.diffs < 0):
            raise ParameterError("Cauchy differences must be finite and nonnegative")
        if self.diffs.size and math.isnan(self.slope):
            self.slope = fit_slope(self.cutoffs, self.means)

    @property
    def means(self) -> np.ndarray:
        return self.diffs.mean(axis=1)

    @property
    def ses(self) -> np.ndarray:
        n = self.diffs.shape[1]
        return self.diffs.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(self.cutoffs))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["kind", "k", "N", "sample", "norm_value"])
        for i, n in enumerate(self.cutoffs):
            for j, v in enumerate(self.diffs[i]):
                w.writerow([self.kind, self.k, n, j, f"{v:.17g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"kind": self.kind, "k": self.k, "cutoffs": list(self.cutoffs),
                "norm": asdict(self.norm), "means": self.means.tolist(), "ses": self.ses.tolist(),
                "slope": self.slope, **self.meta}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True, default=_json_float)


def _json_float(x):
    return float(x)


def fit_slope(cutoffs, means) -> float:
    means = np.asarray(means, dtype=float)
    if means.size < 2 or np.any(means <= 0):
        return math.nan
    return float(np.polyfit(np.log(cutoffs), np.log(means), 1)[0])


@dataclass(frozen=True)
class StudySetup:
    kind: str
    k: int
    cutoffs: tuple
    norm: NormSpec
    spec: SubordinatorSpec
    horizon: float
    n_times: int
    seed: int


def _sample_differences(setup: StudySetup, index: int) -> np.ndarray:
    """Cauchy differences ``||X_N^k - X_2N^k||`` for one coupled realization."""
    root = _rng.stream(setup.seed, "study", setup.kind, index)
    path_seed, noise_seed = (int(v) for v in root.integers(0, 2 ** 62, size=2))
    path = sample_subordinator(setup.spec, setup.horizon, path_seed)
    uniform = np.linspace(0.0, setup.horizon, setup.n_times + 1)[1:]
    heat = setup.kind == "heat"
    if heat:
        out_times = uniform[~np.isin(uniform, path.jump_times)]
    else:
        out_times = np.union1d(uniform, path.jump_times)
    top = 2 * max(setup.cutoffs)
    grid = make_timegrid(path, 1, extra=out_times)
    noise = sample_mode_noise(path, top, grid, noise_seed)
    conv_top = (heat_convolution if heat else wave_convolution)(noise, out_times)
    k = setup.k
    res = []
    for n in setup.cutoffs:
        powers = []
        for m in (n, 2 * n):
            conv = StochasticConvolution(setup.kind, m, out_times, pad_coeffs(conv_top.coeffs, m))
            consts = renorm_constants(setup.kind, path, m, out_times)
            powers.append(pad_coeffs(wick_power(conv, consts, k).coeffs[0], 2 * k * n))
        diff = powers[1] - powers[0]
        spatial = besov_norms(diff, setup.norm.alpha, setup.norm.p, setup.norm.q,
                              oversample=setup.norm.oversample)
        res.append(_time_norm(spatial, setup.horizon / setup.n_times, setup.norm.gamma))
    return np.asarray(res)


def _time_norm(values, dt, gamma):
    if gamma is None:
        return float(np.max(values)) if values.size else 0.0
    s = float(np.sum(values ** gamma) * dt)
    return s ** (1.0 / gamma) if gamma >= 1 else s


def cauchy_convergence_study(kind: str, k: int, cutoffs: Sequence[int], norm: NormSpec,
                             n_paths: int, seed: int, spec: Optional[SubordinatorSpec] = None,
                             horizon: float = 1.0, n_times: int = 20, workers: int = 1) -> ConvergenceReport:
    """Couple ``X_N`` and ``X_2N`` on nested noise and record the Cauchy differences.

    Heat uses the ``L^gamma`` time norm (right Riemann sum over a uniform grid);
    wave uses the supremum over the uniform grid together with the jump times.
    """
    if kind not in ("heat", "wave"):
        raise ParameterError(f"unknown study kind {kind!r}")
    if k < 1:
        raise ParameterError("Wick order must be >= 1")
    cutoffs = tuple(int(n) for n in cutoffs)
    if not cutoffs or min(cutoffs) < 1 or list(cutoffs) != sorted(set(cutoffs)):
        raise ParameterError("cutoffs must be distinct positive integers in increasing order")
    if kind == "heat":
        if norm.gamma is None:
            raise ConstraintError("heat Wick powers need an L^gamma time norm; sup in time is not available")
        check_heat_window(k, norm.alpha, norm.gamma, norm.eps)
    else:
        check_wave_window(norm.alpha)
    if n_paths < 1:
        raise ParameterError("n_paths must be >= 1")
    spec = spec or SubordinatorSpec("poisson", rate=1.0)
    setup = StudySetup(kind, k, cutoffs, norm, spec, horizon, n_times, seed)
    idx = range(n_paths)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_sample_differences, [setup] * n_paths, idx))
    else:
        rows = [_sample_differences(setup, i) for i in idx]
    diffs = np.stack(rows, axis=1)
    return ConvergenceReport(kind, k, list(cutoffs), norm, diffs,
                             meta={"n_paths": n_paths, "seed": seed, "horizon": horizon,
                                   "n_times": n_times, "subordinator": spec.kind})
