"""Remainder-equation solvers ``u = X + v`` for the renormalized heat equation
with quadratic nonlinearity and the wave equation with polynomial
nonlinearity.

Both solvers step the mild form mode by mode with the exact linear propagator
and a second-order quadrature of the forcing (forcing interpolated linearly
across the step). The implicit end-point forcing is resolved by a Picard loop;
a step whose loop stalls is retried as two half steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DataError, ParameterError, SolverError, UnsupportedSpecError
from .pathint import mode_grid
from .spectral import SpectralField, analyze, besov_norms, grid_size, pad_coeffs, synthesize


@dataclass(frozen=True)
class SolveConfig:
    """Solver settings.

    ``kind`` is ``heat`` (order fixed at 2) or ``wave`` (order ``k >= 2``).
    ``nonlinear=False`` drops every term containing ``v`` and keeps only the
    top-order data forcing, which gives an exactly solvable linear probe.
    """

    kind: str = "heat"
    sign: int = 1
    order: int = 2
    cutoff: int = 16
    dt: float = 1e-3
    horizon: float = 0.5
    u0: Optional[SpectralField] = None
    u1: Optional[SpectralField] = None
    R: float = 10.0
    picard_tol: float = 1e-13
    max_picard: int = 50
    max_halvings: int = 6
    eps: float = 0.1
    gamma: float = 4.0
    delta: float = 0.2
    nonlinear: bool = True

    def __post_init__(self):
        if self.kind not in ("heat", "wave"):
            raise ParameterError(f"unknown solver kind {self.kind!r}")
        if self.sign not in (1, -1):
            raise ParameterError("sign must be +1 or -1")
        if self.kind == "heat" and self.order != 2:
            raise UnsupportedSpecError(
                "heat solver only supports k=2: for k ≥ 3 the Wick power lacks the time-integrability "
                "the fixed-point argument needs")
        if self.kind == "wave" and self.order < 2:
            raise ParameterError("wave order k must be >= 2")
        if not self.R > 0:
            raise ParameterError("blow-up threshold R must be > 0")
        if not self.dt > 0 or not self.horizon > 0:
            raise ParameterError("dt and horizon must be > 0")
        if self.cutoff < 1:
            raise ParameterError("solver cutoff M must be >= 1")
        check_solver_window(self.kind, self.order, self.eps, self.gamma, self.delta)


def check_solver_window(kind, k, eps, gamma, delta):
    from .errors import ConstraintError
    if kind == "heat":
        if not 0 < eps < 0.5:
            raise ConstraintError("ε must satisfy 0 < ε < 1/2 for the heat solution space")
        if not 2.0 / (1.0 - eps) < gamma < 2.0 / eps:
            raise ConstraintError(f"γ outside 2/(1−ε) < γ < 2/ε violates the heat solution-space window "
                                  f"(γ={gamma}, ε={eps})")
        if not 0 < delta < 2.0 / gamma - eps:
            raise ConstraintError(f"δ outside 0 < δ < 2/γ − ε violates the heat solution-space window "
                                  f"(δ={delta}, 2/γ−ε={2.0 / gamma - eps:.6g})")
    else:
        bound = 1.0 / (2.0 * (k - 1))
        if not 0 < eps < bound:
            raise ConstraintError(f"ε outside 0 < ε < 1/(2(k−1)) = {bound:.6g} violates the wave "
                                  "solution-space window")


@dataclass(frozen=True, eq=False)
class WickData:
    """Forcing data ``{order: coeffs[n_times, 2K+1, 2K+1]}`` on a time grid.

    Values are piecewise constant in time and read left-continuously: a node
    ``s`` in ``(t_i, t_{i+1}]`` sees the value recorded at ``t_i``.
    """

    kind: str
    times: np.ndarray
    orders: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        if np.any(np.diff(times) <= 0):
            raise DataError("Wick data times must be strictly increasing")
        orders = {}
        for k, v in self.orders.items():
            if isinstance(v, SpectralField):
                v = np.broadcast_to(v.coeffs, (times.size,) + v.coeffs.shape)
            v = np.asarray(v, dtype=complex)
            if v.ndim != 3 or v.shape[0] != times.size:
                raise DataError(f"order {k} data must have shape (n_times, box, box)")
            orders[int(k)] = v
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "orders", orders)

    @classmethod
    def constant(cls, kind: str, fields: dict) -> "WickData":
        return cls(kind, np.array([0.0]), fields)

    @classmethod
    def from_powers(cls, kind: str, powers, sample: int = 0) -> "WickData":
        """Build from :class:`WickPower` objects (order 0 is added as the constant 1)."""
        times = powers[0].times
        orders = {p.order: p.coeffs[sample] for p in powers}
        orders.setdefault(0, np.ones((times.size, 1, 1), dtype=complex))
        return cls(kind, times, orders)

    def index(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.clip(np.searchsorted(self.times, s, side="left") - 1, 0, self.times.size - 1)

    def at(self, order: int, s, cutoff: int) -> np.ndarray:
        if order not in self.orders:
            raise DataError(f"Wick data of order {order} is missing")
        return pad_coeffs(self.orders[order][self.index(s)], cutoff)


@dataclass
class SolutionPath:
    kind: str
    times: np.ndarray
    v: np.ndarray
    dv: Optional[np.ndarray]
    blowup: bool
    exit_time: float
    picard_counts: list
    norms: dict
    cfg: SolveConfig
    meta: dict = field(default_factory=dict)

    def field(self, i: int = -1) -> SpectralField:
        return SpectralField(self.cfg.cutoff, self.v[i])

    def to_table(self) -> str:
        lines = [f"# kind {self.kind}", f"# cutoff {self.cfg.cutoff}"]
        l1, l2 = mode_grid(self.cfg.cutoff)
        for i, t in enumerate(self.times):
            for a, b, c in zip(l1.ravel(), l2.ravel(), self.v[i].ravel()):
                if c != 0:
                    lines.append(f"{t:.17g} {a} {b} {c.real:.17g} {c.imag:.17g}")
        return "\n".join(lines) + "\n"


# -- quadrature weights ---------------------------------------------------------

def _series_switch(x, small, exact_fn, series_fn):
    xs = np.where(small, 1.0, x)
    return np.where(small, series_fn(x), exact_fn(xs))


def heat_weights(lam, h):
    """``(decay, w0, w1)`` for ``int_0^h e^{-(h-s) lam} F(s) ds`` with ``F`` linear."""
    z = np.asarray(lam, dtype=float) * h
    small = z < 1e-3
    e2 = _series_switch(z, small, lambda x: -(np.expm1(-x) + x * np.exp(-x)) / x ** 2,
                        lambda x: 0.5 - x / 3 + x * x / 8 - x ** 3 / 30)
    phi1 = _series_switch(z, small, lambda x: -np.expm1(-x) / x,
                          lambda x: 1 - x / 2 + x * x / 6 - x ** 3 / 24)
    return np.exp(-z), h * e2, h * (phi1 - e2)


def wave_weights(lam, h):
    """Propagator entries and forcing weights for the sine/cosine kernels."""
    w = np.sqrt(np.asarray(lam, dtype=float))
    th = w * h
    small = th < 1e-2
    s1 = _series_switch(th, small, lambda x: (np.sin(x) - x * np.cos(x)) / x ** 3,
                        lambda x: 1 / 3 - x ** 2 / 30 + x ** 4 / 840)
    s2 = _series_switch(th, small, lambda x: (1 - np.cos(x)) / x ** 2,
                        lambda x: 0.5 - x ** 2 / 24 + x ** 4 / 720)
    s3 = _series_switch(th, small, lambda x: (np.cos(x) + x * np.sin(x) - 1) / x ** 2,
                        lambda x: 0.5 - x ** 2 / 8 + x ** 4 / 144)
    sinc = np.sinc(th / math.pi)
    c = np.cos(th)
    prop = (c, h * sinc, -w * w * h * sinc, c)
    return prop, (h * h * s1, h * h * (s2 - s1)), (h * s3, h * (sinc - s3))


# -- forcing -----------------------------------------------------------------------

class _Forcing:
    def __init__(self, cfg: SolveConfig, data: WickData):
        self.cfg = cfg
        self.data = data
        m = cfg.cutoff
        k = cfg.order
        need = (1, 2) if cfg.kind == "heat" else tuple(range(k + 1))
        if not cfg.nonlinear:
            need = (k,)
        for o in need:
            if o not in data.orders:
                raise DataError(f"{cfg.kind} solver needs Wick data of order {o}")
        self.n = grid_size((k + 1) * m + 1)

    def __call__(self, v, s):
        """Forcing coefficients at cutoff ``M`` for states ``v[..., box, box]`` at times ``s``."""
        cfg, d, m, k = self.cfg, self.data, self.cfg.cutoff, self.cfg.order
        top = d.at(k, s, m)
        if not cfg.nonlinear:
            return cfg.sign * np.broadcast_to(top, v.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            return self._nonlinear(v, s, top)

    def _nonlinear(self, v, s, top):
        cfg, d, m, k = self.cfg, self.data, self.cfg.cutoff, self.cfg.order
        real = True
        V = synthesize(v, self.n, real)
        if cfg.kind == "heat":
            P = synthesize(d.at(1, s, m), self.n, real)
            vals = V * V + 2.0 * V * P
        else:
            vals = np.zeros_like(V)
            for l in range(k):
                X = synthesize(d.at(l, s, m), self.n, real)
                vals = vals + math.comb(k, l) * V ** (k - l) * X
        return cfg.sign * (analyze(vals, m) + top)


# -- time stepping -----------------------------------------------------------------

def _monitor(cfg: SolveConfig, v, dv):
    """Gate norm and named monitored norms for states ``v[..., box, box]``."""
    bad = ~np.all(np.isfinite(v), axis=(-2, -1))
    if dv is not None:
        bad |= ~np.all(np.isfinite(dv), axis=(-2, -1))
    v = np.where(bad[..., None, None], 0.0, v)
    if cfg.kind == "heat":
        gate = np.where(bad, np.inf, besov_norms(v, -cfg.delta, oversample=2))
        return gate, {"B^-delta": gate}
    dv = np.where(bad[..., None, None], 0.0, dv)
    l1, l2 = mode_grid(cfg.cutoff)
    jap = 1.0 + l1 * l1 + l2 * l2
    h1 = np.sqrt(np.sum(jap ** (1 - cfg.eps) * np.abs(v) ** 2, axis=(-2, -1)))
    h0 = np.sqrt(np.sum(jap ** (-cfg.eps) * np.abs(dv) ** 2, axis=(-2, -1)))
    h1, h0 = np.where(bad, np.inf, h1), np.where(bad, np.inf, h0)
    return np.maximum(h1, h0), {"H^(1-eps)": h1, "H^(-eps)": h0}


_MONITOR_BATCH = 32
_RUNAWAY = 1e12


def _initial(cfg: SolveConfig):
    size = 2 * cfg.cutoff + 1
    z = np.zeros((size, size), dtype=complex)
    u0 = z if cfg.u0 is None else pad_coeffs(cfg.u0.coeffs, cfg.cutoff)
    u1 = z if cfg.u1 is None else pad_coeffs(cfg.u1.coeffs, cfg.cutoff)
    return u0.copy(), (u1.copy() if cfg.kind == "wave" else None)


def _lam(cfg):
    l1, l2 = mode_grid(cfg.cutoff)
    return (l1 * l1 + l2 * l2).astype(float)


def _step(cfg, forcing, lam, t, h, v, dv, depth=0):
    """Advance ``(v, dv)`` from ``t`` to ``t + h``; returns the new state and the Picard count.

    Data is read once per step at ``t + h`` (left-continuously), which is the
    value it holds on all of ``(t, t + h]``.
    """
    f_now = forcing(v, t + h)
    if cfg.kind == "heat":
        decay, w0, w1 = heat_weights(lam, h)
        base = decay * v + w0 * f_now
        new = base + w1 * f_now
        new_d = None
    else:
        (c, s, ms, c2), (a0, a1), (b0, b1) = wave_weights(lam, h)
        base = c * v + s * dv + a0 * f_now
        base_d = ms * v + c2 * dv + b0 * f_now
        new, new_d = base + a1 * f_now, base_d + b1 * f_now
    iters = 0
    for iters in range(1, cfg.max_picard + 1):
        f_new = forcing(new, t + h)
        nxt = base + (w1 if cfg.kind == "heat" else a1) * f_new
        change = np.max(np.abs(nxt - new))
        scale = max(1.0, float(np.max(np.abs(nxt))))
        new = nxt
        if cfg.kind == "wave":
            new_d = base_d + b1 * f_new
        if not np.isfinite(change) or scale > _RUNAWAY:
            # runaway state: hand it back so the monitor flags the blow-up
            return new, new_d, iters
        if change <= cfg.picard_tol * scale:
            return new, new_d, iters
    if depth >= cfg.max_halvings:
        raise SolverError(f"Picard iteration failed to converge at t={t:.6g} after "
                          f"{cfg.max_halvings} step halvings")
    half = 0.5 * h
    v1, d1, n1 = _step(cfg, forcing, lam, t, half, v, dv, depth + 1)
    v2, d2, n2 = _step(cfg, forcing, lam, t + half, half, v1, d1, depth + 1)
    return v2, d2, n1 + n2


def solver_nodes(cfg: SolveConfig, data: WickData) -> np.ndarray:
    """Uniform steps of size ``dt`` merged with the data times inside ``(0, T)``."""
    n = int(round(cfg.horizon / cfg.dt))
    base = np.linspace(0.0, cfg.horizon, n + 1)
    inner = data.times[(data.times > 0) & (data.times < cfg.horizon)]
    return np.unique(np.concatenate([base, inner]))


def _solve(data: WickData, cfg: SolveConfig) -> SolutionPath:
    if data.kind != cfg.kind:
        raise DataError(f"{data.kind} data cannot drive the {cfg.kind} solver")
    forcing = _Forcing(cfg, data)
    lam = _lam(cfg)
    nodes = solver_nodes(cfg, data)
    n_steps = nodes.size - 1
    v, dv = _initial(cfg)
    times, vs, dvs, counts = [0.0], [v], [dv], []
    records, checked, blowup = {}, 0, False
    for i in range(n_steps + 1):
        # monitored norms are evaluated in batches; the path is cut at the first exceedance
        if len(vs) - checked >= _MONITOR_BATCH or i == n_steps or blowup:
            batch_d = None if dv is None else np.stack(dvs[checked:])
            gate, extra = _monitor(cfg, np.stack(vs[checked:]), batch_d)
            for key, val in extra.items():
                records.setdefault(key, []).extend(val.tolist())
            over = np.flatnonzero(gate > cfg.R)
            if over.size:
                cut = checked + over[0] + 1
                del times[cut:], vs[cut:], dvs[cut:], counts[cut - 1:]
                for key in records:
                    del records[key][cut:]
                blowup = True
                break
            checked = len(vs)
        if i == n_steps:
            break
        v, dv, its = _step(cfg, forcing, lam, nodes[i], nodes[i + 1] - nodes[i], v, dv)
        counts.append(its)
        times.append(nodes[i + 1])
        vs.append(v)
        dvs.append(dv)
        blowup = not np.all(np.isfinite(v))
    exit_time = times[-1]
    norms = {key: np.asarray(val) for key, val in records.items()}
    if cfg.kind == "heat":
        # L^gamma_t B^{2/gamma - delta} companion norm, right Riemann sum
        g = cfg.gamma
        vals = besov_norms(np.stack(vs[1:]), 2.0 / g - cfg.delta, oversample=2) if len(vs) > 1 else np.zeros(0)
        steps = np.diff(np.asarray(times))
        norms["L^gamma B^(2/gamma-delta)"] = float(np.sum(vals ** g * steps)) ** (1.0 / g)
    return SolutionPath(cfg.kind, np.asarray(times), np.stack(vs),
                        None if cfg.kind == "heat" else np.stack(dvs),
                        bool(blowup), float(exit_time), counts, norms, cfg,
                        {"dt": cfg.dt, "data": dict(data.meta)})


def solve_heat_quadratic(data: WickData, cfg: SolveConfig) -> SolutionPath:
    """Remainder ``v`` for ``u = Phi + v`` in the renormalized heat equation with ``k = 2``."""
    if cfg.kind != "heat":
        raise ParameterError("configuration is not a heat configuration")
    return _solve(data, cfg)


def solve_wave_polynomial(data: WickData, cfg: SolveConfig) -> SolutionPath:
    """Remainder ``(v, dv)`` for ``u = Psi + v`` in the renormalized wave equation."""
    if cfg.kind != "wave":
        raise ParameterError("configuration is not a wave configuration")
    return _solve(data, cfg)


# -- a-posteriori check -----------------------------------------------------------

def mild_residual(solution: SolutionPath, data: WickData, cfg: SolveConfig, refine: int = 4,
                  nodes: int = 4) -> float:
    """Monitored-norm gap between ``v(T)`` and the mild right-hand side at ``T``.

    ``v`` is interpolated in time by cubic splines; the Duhamel integral is
    evaluated by Gauss-Legendre quadrature on every solver step split into
    ``refine`` pieces.
    """
    if solution.blowup:
        raise SolverError("mild residual needs a solution without blow-up")
    times = solution.times
    T = times[-1]
    lam = _lam(cfg)
    forcing = _Forcing(cfg, data)
    u0, u1 = _initial(cfg)
    edges = np.linspace(times[0], T, refine * (times.size - 1) + 1)
    x, w = np.polynomial.legendre.leggauss(nodes)
    a, b = edges[:-1, None], edges[1:, None]
    s = (0.5 * (b - a) * (x + 1) + a).ravel()
    ws = (0.5 * (b - a) * w).ravel()
    if times.size > 2:
        v_s = CubicSpline(times, solution.v, axis=0)(s)
    else:
        v_s = np.stack([np.interp(s, times, solution.v[:, i, j]) for i, j in np.ndindex(lam.shape)], -1)
        v_s = v_s.reshape((s.size,) + lam.shape)
    F = np.concatenate([forcing(v_s[j:j + 512], s[j:j + 512]) for j in range(0, s.size, 512)])
    u = (T - s)[:, None, None]
    if cfg.kind == "heat":
        rhs = np.exp(-lam * T) * u0 + np.einsum("n,nij->ij", ws, np.exp(-lam * u) * F)
        return float(besov_norms(solution.v[-1] - rhs, -cfg.delta, oversample=2))
    om = np.sqrt(lam)
    sin_k = u * np.sinc(om * u / math.pi)
    cos_k = np.cos(om * u)
    rhs = np.cos(om * T) * u0 + T * np.sinc(om * T / math.pi) * u1 + np.einsum("n,nij->ij", ws, sin_k * F)
    rhs_d = -om * np.sin(om * T) * u0 + np.cos(om * T) * u1 + np.einsum("n,nij->ij", ws, cos_k * F)
    _, gaps = _monitor(cfg, solution.v[-1] - rhs, solution.dv[-1] - rhs_d)
    return float(max(gaps.values()))


# -- renormalized versus naive forcing ------------------------------------------

@dataclass
class ContrastReport:
    """Sup-in-time gate norms of heat solves driven by Wick versus naive data.

    ``renormalized`` and ``naive`` have shape ``(n_cutoffs, n_paths)``.
    """

    cutoffs: list
    renormalized: np.ndarray
    naive: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def medians(self) -> dict:
        return {"renormalized": np.median(self.renormalized, axis=1).tolist(),
                "naive": np.median(self.naive, axis=1).tolist()}


def _contrast_path(args):
    from . import _rng
    from .linfield import StochasticConvolution, heat_convolution, renorm_constants
    from .pathint import make_timegrid, sample_mode_noise
    from .subordinator import sample_subordinator
    from .wick import wick_power

    spec, cutoffs, seed, index, horizon, n_steps, refine, base_cfg = args
    root = _rng.stream(seed, "contrast", index)
    path_seed, noise_seed = (int(v) for v in root.integers(0, 2 ** 62, size=2))
    path = sample_subordinator(spec, horizon, path_seed)
    # geometric refinement after each jump resolves the fast heat decay of the new mass
    step = horizon / n_steps
    post = (path.jump_times[:, None] + step * 2.0 ** -np.arange(1, refine + 1)[None, :]).ravel()
    grid = make_timegrid(path, n_steps, extra=post[post < horizon])
    noise = sample_mode_noise(path, max(cutoffs), grid, noise_seed)
    conv_top = heat_convolution(noise)
    out = []
    for n in cutoffs:
        conv = StochasticConvolution("heat", n, grid, pad_coeffs(conv_top.coeffs, n))
        consts = renorm_constants("heat", path, n, grid)
        phi2 = wick_power(conv, consts, 2).coeffs[0]
        m = 2 * n
        size = 2 * m + 1
        shift = np.zeros((grid.size, size, size), dtype=complex)
        shift[:, m, m] = consts.values
        cfg = SolveConfig(**{**base_cfg, "kind": "heat", "order": 2, "cutoff": m,
                             "horizon": horizon, "dt": horizon / n_steps})
        row = []
        for extra in (0.0, 1.0):
            # naive data P_N(Phi^2) equals the Wick square plus the constant c_N(t)
            data = WickData("heat", grid, {1: conv.coeffs[0], 2: phi2 + extra * shift})
            sol = solve_heat_quadratic(data, cfg)
            row.append(float(np.max(sol.norms["B^-delta"])))
        out.append(row)
    return np.asarray(out)


def renormalized_vs_naive(spec, cutoffs, n_paths: int, seed: int, horizon: float = 1.0,
                          n_steps: int = 100, sign: int = -1, R: float = 1e8, delta: float = 0.2,
                          refine: int = 12, workers: int = 1) -> ContrastReport:
    """Run heat ``k = 2`` with Wick data and with naive squares on identical noise."""
    from concurrent.futures import ProcessPoolExecutor

    cutoffs = [int(n) for n in cutoffs]
    base = {"sign": sign, "R": R, "delta": delta}
    jobs = [(spec, cutoffs, seed, i, horizon, n_steps, refine, base) for i in range(n_paths)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_contrast_path, jobs))
    else:
        rows = [_contrast_path(j) for j in jobs]
    arr = np.stack(rows, axis=1)  # (n_cutoffs, n_paths, 2)
    return ContrastReport(cutoffs, arr[..., 0], arr[..., 1],
                          {"n_paths": n_paths, "seed": seed, "horizon": horizon, "n_steps": n_steps,
                           "sign": sign})
