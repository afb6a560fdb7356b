"""Subordinators: sampling, evaluation and Stieltjes integration of
nondecreasing cadlag paths ``L`` with ``L(0) = 0``.

Jump measures follow the family ``rho(dx) = c x^(-1-alpha) e^(-theta x) dx``
(gamma is ``alpha = 0``), plus finite-activity (compound) Poisson laws and a
``custom`` kind that only carries a Levy density for moment diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import _rng
from .errors import (
    EvaluationError,
    ParameterError,
    RangeError,
    TruncationRequiredError,
    UnsupportedSpecError,
)

KINDS = ("deterministic-linear", "poisson", "compound-poisson", "gamma", "tempered-stable", "custom")
JUMP_LAWS = ("unit", "exponential", "uniform")
INFINITE_ACTIVITY = ("gamma", "tempered-stable")


@dataclass(frozen=True)
class SubordinatorSpec:
    """Law of a subordinator.

    ``drift`` is the deterministic rate ``b``. Poisson kinds use ``rate`` and,
    for compound Poisson, ``jump_law`` scaled by ``jump_scale`` (``unit`` puts
    every jump at ``jump_scale``; ``exponential`` has mean ``jump_scale``;
    ``uniform`` is uniform on ``(0, jump_scale]``). Gamma uses
    ``rho(x) = shape x^-1 e^(-gamma_rate x)``; tempered-stable uses
    ``rho(x) = intensity x^(-1-alpha) e^(-tempering x)``. Jumps below
    ``epsilon`` are replaced by their mean for the infinite-activity kinds.
    """

    kind: str
    drift: float = 0.0
    rate: float = 1.0
    jump_law: str = "unit"
    jump_scale: float = 1.0
    shape: float = 1.0
    gamma_rate: float = 1.0
    alpha: float = 0.5
    tempering: float = 1.0
    intensity: float = 1.0
    epsilon: float = 1e-4
    levy_density: Optional[Callable[[float], float]] = field(default=None, compare=False)
    support: tuple = (0.0, math.inf)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown subordinator kind {self.kind!r}; expected one of {KINDS}")
        if not (self.drift >= 0 and math.isfinite(self.drift)):
            raise ParameterError("drift b must be finite and >= 0")
        if self.kind in ("poisson", "compound-poisson"):
            _positive("rate", self.rate)
            _positive("jump_scale", self.jump_scale)
            if self.jump_law not in JUMP_LAWS:
                raise ParameterError(f"unknown jump law {self.jump_law!r}")
        if self.kind == "gamma":
            _positive("shape", self.shape)
            _positive("gamma_rate", self.gamma_rate)
        if self.kind == "tempered-stable":
            if not 0 < self.alpha < 1:
                raise ParameterError("stability index alpha must lie in (0, 1)")
            _positive("tempering", self.tempering)
            _positive("intensity", self.intensity)
        if self.kind in INFINITE_ACTIVITY:
            if self.epsilon == 0:
                raise TruncationRequiredError(
                    f"{self.kind} has infinite activity; a small-jump truncation epsilon > 0 is required")
            _positive("epsilon", self.epsilon)

    # -- Levy measure -----------------------------------------------------

    @property
    def infinite_activity(self) -> bool:
        return self.kind in INFINITE_ACTIVITY

    def _power_family(self):
        """(c, alpha, theta) of the power-exponential density."""
        if self.kind == "gamma":
            return self.shape, 0.0, self.gamma_rate
        if self.kind == "tempered-stable":
            return self.intensity, self.alpha, self.tempering
        raise UnsupportedSpecError(f"{self.kind} has no power-exponential Levy density")

    def density(self, x):
        """Levy density at ``x > 0`` for the absolutely continuous kinds."""
        if self.kind == "custom":
            if self.levy_density is None:
                raise UnsupportedSpecError("custom spec without a levy_density")
            lo, hi = self.support
            return self.levy_density(x) if lo < x < hi else 0.0
        c, a, th = self._power_family()
        return c * x ** (-1.0 - a) * math.exp(-th * x)

    def small_jump_mean(self, eps: Optional[float] = None) -> float:
        """``int_0^eps x rho(dx)``, the drift that replaces jumps below ``eps``."""
        if not self.infinite_activity:
            return 0.0
        eps = self.epsilon if eps is None else eps
        c, a, th = self._power_family()
        # x * rho(x) = c x^-a e^(-th x); algebraic endpoint weight handles x^-a
        val, _ = integrate.quad(lambda x: math.exp(-th * x), 0.0, eps,
                                weight="alg", wvar=(-a, 0.0), epsabs=0, epsrel=1e-12)
        return c * val

    def large_jump_mass(self, eps: Optional[float] = None) -> float:
        """``rho((eps, inf))``: intensity of jumps kept in simulation."""
        if self.kind == "deterministic-linear":
            return 0.0
        if self.kind in ("poisson", "compound-poisson"):
            return self.rate
        eps = self.epsilon if eps is None else eps
        c, a, th = self._power_family()
        # substitute x = e^u to tame the x^(-1-a) blow-up at small eps
        def f(u):
            e = th * math.exp(min(u, 700.0))
            return 0.0 if e > 745.0 else c * math.exp(-a * u - e)
        lo = math.log(eps)
        val1, _ = integrate.quad(f, lo, 0.0, epsabs=0, epsrel=1e-12) if lo < 0 else (0.0, 0.0)
        val2, _ = integrate.quad(f, max(lo, 0.0), np.inf, epsabs=0, epsrel=1e-12)
        return val1 + val2

    def mean_jump(self) -> float:
        if self.kind == "poisson":
            return 1.0
        return {"unit": 1.0, "exponential": 1.0, "uniform": 0.5}[self.jump_law] * self.jump_scale

    def mean_rate(self) -> float:
        """``E[L(1)] = b + int x rho(dx)``."""
        if self.kind == "deterministic-linear":
            return self.drift
        if self.kind in ("poisson", "compound-poisson"):
            return self.drift + self.rate * self.mean_jump()
        if self.kind == "custom":
            raise UnsupportedSpecError("mean of a custom Levy measure is not available")
        c, a, th = self._power_family()
        return self.drift + c * th ** (a - 1.0) * math.gamma(1.0 - a)


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ParameterError(f"{name} must be finite and > 0, got {value}")


@dataclass(frozen=True)
class SubordinatorPath:
    """Drift ``b_eff`` plus finitely many jumps on ``[0, horizon]``."""

    horizon: float
    drift: float
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        times = np.asarray(self.jump_times, dtype=float).reshape(-1)
        sizes = np.asarray(self.jump_sizes, dtype=float).reshape(-1)
        if not self.horizon > 0:
            raise ParameterError("horizon must be > 0")
        if self.drift < 0:
            raise ParameterError("effective drift must be >= 0")
        if times.shape != sizes.shape:
            raise ParameterError("jump times and sizes differ in length")
        if times.size and (np.any(np.diff(times) <= 0) or times[0] <= 0 or times[-1] > self.horizon):
            raise ParameterError("jump times must be strictly increasing inside (0, horizon]")
        if np.any(sizes <= 0):
            raise ParameterError("jump sizes must be > 0")
        times.setflags(write=False)
        sizes.setflags(write=False)
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "jump_sizes", sizes)

    @property
    def n_jumps(self) -> int:
        return self.jump_times.size

    def evaluate(self, t, side="right"):
        return evaluate_cadlag(self, t, side)

    def total(self) -> float:
        return float(self.drift * self.horizon + self.jump_sizes.sum())

    def to_text(self) -> str:
        lines = [f"# kind {self.kind}",
                 f"# b_eff {self.drift:.17g}",
                 f"# horizon {self.horizon:.17g}"]
        lines += [f"{t:.17g} {s:.17g}" for t, s in zip(self.jump_times, self.jump_sizes)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SubordinatorPath":
        header, times, sizes = {}, [], []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, value = line[1:].split(None, 1)
                header[key] = value.strip()
                continue
            t, s = line.split()
            times.append(float(t))
            sizes.append(float(s))
        return cls(float(header["horizon"]), float(header["b_eff"]),
                   np.array(times), np.array(sizes), header.get("kind", "custom"))


def _sample_jump_sizes(spec: SubordinatorSpec, n: int, rng) -> np.ndarray:
    if spec.kind == "poisson":
        return np.ones(n)
    if spec.kind == "compound-poisson":
        if spec.jump_law == "unit":
            return np.full(n, spec.jump_scale)
        if spec.jump_law == "exponential":
            return rng.exponential(spec.jump_scale, n)
        # uniform on (0, scale]
        return spec.jump_scale * (1.0 - rng.random(n))
    return _sample_power_exponential(spec, n, rng)


def _sample_power_exponential(spec, n, rng):
    """Rejection sampler for ``c x^(-1-a) e^(-th x)`` restricted to ``(eps, inf)``."""
    c, a, th = spec._power_family()
    eps = spec.epsilon
    x0 = max(eps, 1.0)
    # envelope A: c x^(-1-a) on (eps, x0); envelope B: c x0^(-1-a) e^(-th x) on (x0, inf)
    if eps < 1.0:
        mass_a = math.log(1.0 / eps) if a == 0 else (eps ** -a - 1.0) / a
    else:
        mass_a = 0.0
    mass_b = x0 ** (-1.0 - a) * math.exp(-th * x0) / th
    p_a = mass_a / (mass_a + mass_b)
    out = np.empty(0)
    while out.size < n:
        m = 2 * (n - out.size) + 8
        use_a = rng.random(m) < p_a
        u = rng.random(m)
        x = np.empty(m)
        if a == 0:
            x[use_a] = eps * (1.0 / eps) ** u[use_a]
        else:
            x[use_a] = (eps ** -a - u[use_a] * (eps ** -a - 1.0)) ** (-1.0 / a)
        x[~use_a] = x0 + rng.exponential(1.0 / th, (~use_a).sum())
        acc = np.where(use_a, np.exp(-th * x), (x / x0) ** (-1.0 - a))
        keep = rng.random(m) < acc
        out = np.concatenate([out, x[keep]])
    return out[:n]


def sample_subordinator(spec: SubordinatorSpec, horizon: float, seed: int) -> SubordinatorPath:
    """Sample a path on ``[0, horizon]``; deterministic in ``(spec, horizon, seed)``."""
    if not horizon > 0:
        raise ParameterError("horizon must be > 0")
    if spec.kind == "custom":
        raise UnsupportedSpecError("custom Levy densities cannot be sampled")
    if spec.kind == "deterministic-linear":
        return SubordinatorPath(horizon, spec.drift, np.empty(0), np.empty(0), spec.kind)
    rng = _rng.stream(seed, "subordinator", spec.kind)
    b_eff = spec.drift + spec.small_jump_mean()
    n = rng.poisson(spec.large_jump_mass() * horizon)
    times = np.sort(horizon * (1.0 - rng.random(n)))  # uniform on (0, horizon]
    sizes = _sample_jump_sizes(spec, n, rng)
    # ties have probability zero; merge them if floating point produces one
    if n and np.any(np.diff(times) <= 0):
        times, inv = np.unique(times, return_inverse=True)
        sizes = np.bincount(inv, weights=sizes)
    return SubordinatorPath(horizon, b_eff, times, sizes, spec.kind)


def two_sided_path(past: SubordinatorPath, future: SubordinatorPath) -> SubordinatorPath:
    """Glue a time-reflected ``past`` path in front of ``future``.

    The result lives on ``[0, past.horizon + future.horizon]``; time ``s`` on it
    corresponds to ``s - past.horizon`` on the two-sided axis.
    """
    if past.drift != future.drift:
        raise ParameterError("past and future paths must share the effective drift")
    tp = past.horizon
    ptimes = tp - past.jump_times[::-1]
    psizes = past.jump_sizes[::-1]
    # a past jump at the far end of the window would land on 0; push it inside
    keep = ptimes > 0
    times = np.concatenate([ptimes[keep], tp + future.jump_times])
    sizes = np.concatenate([psizes[keep], future.jump_sizes])
    return SubordinatorPath(tp + future.horizon, future.drift, times, sizes, future.kind)


def evaluate_cadlag(path: SubordinatorPath, t, side: str = "right"):
    """``L(t)`` (``side='right'``) or ``L(t-)`` (``side='left'``)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > path.horizon) or np.any(np.isnan(t_arr)):
        raise RangeError(f"t outside [0, {path.horizon}]")
    if side not in ("right", "left"):
        raise ParameterError("side must be 'right' or 'left'")
    cum = np.concatenate([[0.0], np.cumsum(path.jump_sizes)])
    idx = np.searchsorted(path.jump_times, t_arr, side=side)
    out = path.drift * t_arr + cum[idx]
    return float(out) if out.ndim == 0 else out


def stieltjes_integral(f: Callable, path: SubordinatorPath, a: float = 0.0, b: Optional[float] = None) -> float:
    """``int_(a,b] f dL`` for a deterministic integrand.

    The drift part uses adaptive quadrature at relative tolerance 1e-10, the
    jump part sums ``f(t_j) dL_j`` over jumps in ``(a, b]``.
    """
    b = path.horizon if b is None else b
    if not 0 <= a <= b <= path.horizon:
        raise RangeError(f"[{a}, {b}] is not inside [0, {path.horizon}]")
    total = 0.0
    if path.drift > 0 and b > a:
        def g(s):
            v = f(s)
            if not np.isfinite(v):
                raise EvaluationError(f"integrand is not finite at s={s}")
            return v
        val, _ = integrate.quad(g, a, b, epsabs=0.0, epsrel=1e-10, limit=500)
        total += path.drift * val
    mask = (path.jump_times > a) & (path.jump_times <= b)
    if np.any(mask):
        vals = np.array([f(s) for s in path.jump_times[mask]], dtype=float)
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("integrand is not finite at a jump time")
        total += float(np.dot(vals, path.jump_sizes[mask]))
    return float(total)


@dataclass(frozen=True)
class LogMomentResult:
    finite: bool
    value: float
    witness: tuple = ()

    def __bool__(self):
        return self.finite


def check_log_moment(spec: SubordinatorSpec, decay_ratio: float = 0.9) -> LogMomentResult:
    """Decide whether ``int (0 v log x) rho(dx)`` is finite.

    Finite-measure kinds are integrated directly. Densities are integrated in
    ``u = log x`` over dyadically growing windows; the integral is declared
    divergent when the window contributions stop shrinking geometrically
    (ratio above ``decay_ratio``), and the partial sums are returned as the
    witness.
    """
    if spec.kind == "deterministic-linear":
        return LogMomentResult(True, 0.0)
    if spec.kind in ("poisson", "compound-poisson"):
        s = spec.jump_scale if spec.kind == "compound-poisson" else 1.0
        law = spec.jump_law if spec.kind == "compound-poisson" else "unit"
        if law == "unit":
            m = max(math.log(s), 0.0)
        elif law == "exponential":
            m, _ = integrate.quad(lambda x: math.log(x) * math.exp(-x / s) / s, 1.0, np.inf)
        else:
            m = (s * math.log(s) - s + 1.0) / s if s > 1 else 0.0
        return LogMomentResult(True, spec.rate * m)
    if spec.kind == "custom" and spec.levy_density is None:
        raise UnsupportedSpecError("custom spec has no analytic Levy density")

    lo, hi = spec.support
    u0 = max(0.0, math.log(lo)) if lo > 0 else 0.0
    u_max = min(700.0, math.log(hi)) if math.isfinite(hi) else 700.0

    def h(u):
        x = math.exp(u)
        v = u * spec.density(x) * x
        return v if math.isfinite(v) else 0.0

    edges = [u0]
    k = 0
    while edges[-1] < u_max:
        edges.append(min(u0 + 2.0 ** (k + 1) - 1.0, u_max))
        k += 1
    segs = []
    for a_, b_ in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(h, a_, b_, limit=200, epsabs=1e-300, epsrel=1e-10)
        segs.append(v)
    partial = tuple(np.cumsum(segs))
    # the last window may be clipped at u_max; judge decay on full windows
    full = segs[:-1] if len(segs) > 4 else segs
    tail = [s for s in full[-4:]]
    decaying = all(
        (b_ <= decay_ratio * a_) or b_ <= 1e-300 for a_, b_ in zip(tail[:-1], tail[1:])
    )
    if decaying:
        return LogMomentResult(True, float(partial[-1]))
    return LogMomentResult(False, math.inf, partial)
