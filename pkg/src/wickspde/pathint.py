"""Subordinated Brownian mode increments, left-point Young integrals and
exact grid p-variation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from . import _rng
from .errors import DomainError, GridError, InterpolationPolicyError, ParameterError
from .subordinator import SubordinatorPath


def mode_grid(cutoff: int):
    """Integer wavevector components ``(l1, l2)`` on the ``(2N+1)^2`` box."""
    r = np.arange(-cutoff, cutoff + 1)
    return np.meshgrid(r, r, indexing="ij")


def ball_mask(cutoff: int) -> np.ndarray:
    l1, l2 = mode_grid(cutoff)
    return l1 * l1 + l2 * l2 <= cutoff * cutoff


def half_plane_modes(cutoff: int):
    """Representatives ``l`` of the pairs ``{l, -l}`` in the ball, zero mode first."""
    out = [(0, 0)]
    n2 = cutoff * cutoff
    for l1 in range(0, cutoff + 1):
        for l2 in range(-cutoff, cutoff + 1):
            if (l1 > 0 or l2 > 0) and l1 * l1 + l2 * l2 <= n2:
                out.append((l1, l2))
    return out


def hermitian_fill(arr: np.ndarray, cutoff: int) -> np.ndarray:
    """Overwrite the negative half-plane of the last two axes with conjugates."""
    flipped = np.conj(arr[..., ::-1, ::-1])
    l1, l2 = mode_grid(cutoff)
    neg = (l1 < 0) | ((l1 == 0) & (l2 < 0))
    return np.where(neg, flipped, arr)


def make_timegrid(path: SubordinatorPath, n_steps: int, extra=()) -> np.ndarray:
    """Uniform grid with ``n_steps`` cells on ``[0, T]`` merged with the jump times."""
    base = np.linspace(0.0, path.horizon, n_steps + 1)
    return np.unique(np.concatenate([base, path.jump_times, np.asarray(extra, dtype=float)]))


@dataclass(frozen=True)
class ModeNoise:
    """Increments of ``beta^l(L(t))`` over the cells of ``times`` for ``|l| <= cutoff``.

    Each cell ``(t_i, t_{i+1}]`` carries a drift increment (variance
    ``b_eff * dt``) and a jump increment (variance = jump of ``L`` at
    ``t_{i+1}``, zero if none). Arrays have shape
    ``(n_samples, n_cells, 2N+1, 2N+1)``, indexed ``[.., l1 + N, l2 + N]``.
    """

    cutoff: int
    times: np.ndarray
    drift_var: np.ndarray
    jump_var: np.ndarray
    drift_increments: np.ndarray
    jump_increments: np.ndarray
    seed: int
    path: SubordinatorPath

    @property
    def n_samples(self) -> int:
        return self.drift_increments.shape[0]

    @property
    def n_cells(self) -> int:
        return self.times.size - 1

    @property
    def increments(self) -> np.ndarray:
        return self.drift_increments + self.jump_increments

    def restrict(self, cutoff: int) -> "ModeNoise":
        """Same realization seen through a smaller cutoff."""
        if cutoff > self.cutoff:
            raise ParameterError("cannot restrict to a larger cutoff")
        d = self.cutoff - cutoff
        sl = (Ellipsis, slice(d, d + 2 * cutoff + 1), slice(d, d + 2 * cutoff + 1))
        m = ball_mask(cutoff)
        return ModeNoise(cutoff, self.times, self.drift_var, self.jump_var,
                         self.drift_increments[sl] * m, self.jump_increments[sl] * m,
                         self.seed, self.path)

    def auxiliary(self, tag: str, count: int) -> np.ndarray:
        """Unit-variance Hermitian Gaussians keyed by ``(seed, tag, mode)``.

        Returned shape is ``(count, n_samples, n_cells, 2N+1, 2N+1)``; used to
        build within-cell integrals conditionally on the stored increments.
        """
        return _hermitian_normals(self.seed, ("aux", tag), self.cutoff,
                                  (count, self.n_samples, self.n_cells))


def _hermitian_normals(seed, key, cutoff, lead_shape):
    """Complex normals with ``E|z|^2 = 1`` (real at ``l = 0``), Hermitian in ``l``."""
    size = 2 * cutoff + 1
    out = np.zeros(tuple(lead_shape) + (size, size), dtype=complex)
    for l1, l2 in half_plane_modes(cutoff):
        rng = _rng.stream(seed, *key, l1, l2)
        if l1 == 0 and l2 == 0:
            out[..., cutoff, cutoff] = rng.standard_normal(lead_shape)
        else:
            z = rng.standard_normal(tuple(lead_shape) + (2,)) * np.sqrt(0.5)
            out[..., l1 + cutoff, l2 + cutoff] = z[..., 0] + 1j * z[..., 1]
    return hermitian_fill(out, cutoff)


def sample_mode_noise(path: SubordinatorPath, cutoff: int, timegrid, seed: int,
                      n_samples: int = 1) -> ModeNoise:
    """Sample ``n_samples`` independent realizations of the mode increments.

    Streams are keyed per mode, so a larger cutoff reproduces the smaller one
    on the shared modes.
    """
    if cutoff < 0:
        raise ParameterError("cutoff must be >= 0")
    times = np.asarray(timegrid, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise GridError("time grid must be strictly increasing with at least two points")
    if times[0] != 0.0 or times[-1] != path.horizon:
        raise GridError("time grid must start at 0 and end at the path horizon")
    missing = ~np.isin(path.jump_times, times)
    if np.any(missing):
        raise GridError(f"time grid misses {int(missing.sum())} jump time(s) of the subordinator; "
                        "increments would no longer resolve the jumps exactly")
    dt = np.diff(times)
    drift_var = path.drift * dt
    jump_var = np.zeros_like(dt)
    idx = np.searchsorted(times, path.jump_times) - 1
    jump_var[idx] = path.jump_sizes

    z = _hermitian_normals(seed, ("mode",), cutoff, (2, n_samples, dt.size))
    drift = z[0] * np.sqrt(drift_var)[None, :, None, None]
    jumps = z[1] * np.sqrt(jump_var)[None, :, None, None]
    m = ball_mask(cutoff)
    return ModeNoise(cutoff, times, drift_var, jump_var, drift * m, jumps * m, seed, path)


@dataclass(frozen=True)
class GridPath:
    """Values of a path on a grid; ``left_values`` hold left limits at each time."""

    times: np.ndarray
    values: np.ndarray
    left_values: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if t.ndim != 1 or v.shape != t.shape:
            raise ParameterError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ParameterError("grid times must be strictly increasing")
        lv = v if self.left_values is None else np.asarray(self.left_values)
        if lv.shape != v.shape:
            raise ParameterError("left_values must match values")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "left_values", lv)

    @property
    def continuity(self) -> np.ndarray:
        return self.left_values == self.values

    def at(self, t, interpolate=False):
        """(right value, left limit) at the times ``t``."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t)
        idx_c = np.minimum(idx, self.times.size - 1)
        hit = self.times[idx_c] == t
        if np.all(hit):
            return self.values[idx_c], self.left_values[idx_c]
        if not interpolate:
            raise InterpolationPolicyError(
                "path is not defined at some required grid points; pass interpolate=True "
                "to allow linear interpolation")
        right = _interp(t, self.times, self.values)
        left = np.where(hit, self.left_values[idx_c], right)
        right = np.where(hit, self.values[idx_c], right)
        return right, left


def _interp(x, xp, fp):
    if np.iscomplexobj(fp):
        return np.interp(x, xp, fp.real) + 1j * np.interp(x, xp, fp.imag)
    return np.interp(x, xp, fp)


def mode_path(noise: ModeNoise, l, sample: int = 0) -> GridPath:
    """``beta^l(L(t))`` on the noise grid, with left limits at jump times."""
    i, j = l[0] + noise.cutoff, l[1] + noise.cutoff
    d = noise.drift_increments[sample, :, i, j]
    jmp = noise.jump_increments[sample, :, i, j]
    right = np.concatenate([[0.0], np.cumsum(d + jmp)])
    left = right.copy()
    left[1:] = right[:-1] + d
    return GridPath(noise.times, right, left)


def young_integral(f: GridPath, g: GridPath, a: Optional[float] = None, b: Optional[float] = None,
                   interpolate: bool = False):
    """Left-point sum ``sum f(t_{i-1}) (g(t_i) - g(t_{i-1}))`` on the common refinement.

    Left limits are treated as grid points immediately before their time, so
    a jump of ``g`` at ``s`` contributes ``f(s-) * dg(s)``; for pure-jump ``g``
    with all jumps on the grid this is the exact Young integral.
    """
    lo = max(f.times[0], g.times[0]) if a is None else a
    hi = min(f.times[-1], g.times[-1]) if b is None else b
    if hi < lo:
        raise DomainError("empty integration interval")
    ts = np.union1d(f.times, g.times)
    ts = ts[(ts >= lo) & (ts <= hi)]
    if ts.size == 0 or ts[0] != lo or ts[-1] != hi:
        if not interpolate:
            raise InterpolationPolicyError("interval endpoints are not grid points")
        ts = np.union1d(ts, [lo, hi])
    f_r, f_l = f.at(ts, interpolate)
    g_r, g_l = g.at(ts, interpolate)
    shared = (f_r[1:] != f_l[1:]) & (g_r[1:] != g_l[1:])
    if np.any(shared):
        raise DomainError("f and g share a discontinuity; the Young integral is not defined here")
    cont = f_r[:-1] * (g_l[1:] - g_r[:-1])
    jump = f_l[1:] * (g_r[1:] - g_l[1:])
    return (cont + jump).sum()


def _expanded_values(g: GridPath) -> np.ndarray:
    """Path values in time order with left limits inserted before jumps."""
    v, lv = g.values, g.left_values
    out = [v[0]]
    for i in range(1, v.size):
        if lv[i] != v[i]:
            out.append(lv[i])
        out.append(v[i])
    return np.asarray(out)


def _local_extrema(x: np.ndarray) -> np.ndarray:
    keep = np.concatenate([[True], np.diff(x) != 0])
    x = x[keep]
    if x.size <= 2:
        return x
    d = np.diff(x)
    turn = d[:-1] * d[1:] < 0
    return x[np.concatenate([[True], turn, [True]])]


@numba.njit(cache=True)
def _pvar_dp(x, p):
    n = x.shape[0]
    best = np.zeros(n)
    for j in range(1, n):
        m = 0.0
        for i in range(j):
            v = best[i] + abs(x[j] - x[i]) ** p
            if v > m:
                m = v
        best[j] = m
    return best[n - 1]


def p_variation(g: GridPath, p: float) -> float:
    """Exact ``p``-variation of the grid path over subsequences of its points.

    For real paths only local extrema can matter when ``p >= 1``; complex
    paths run the full quadratic dynamic program.
    """
    if p < 1:
        raise ParameterError("p must be >= 1")
    if g.times.size == 0:
        raise DomainError("p-variation of an empty grid")
    x = _expanded_values(g)
    if x.size < 2:
        return 0.0
    if np.iscomplexobj(x):
        s = _pvar_dp(x.astype(np.complex128), float(p))
    else:
        s = _pvar_dp(_local_extrema(x.astype(np.float64)), float(p))
    return float(s ** (1.0 / p))
