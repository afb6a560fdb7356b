"""Band-limited real fields on the 2-torus.

A :class:`SpectralField` of cutoff ``N`` stores coefficients ``a_l`` of
``f(x) = sum_{|l| <= N} a_l e^{i l.x}`` on the box ``[-N, N]^2`` (zero
outside the Euclidean ball). ``L^p`` norms use the normalized measure
``dx / (2 pi)^2``, so ``||e_l||_p = 1`` and Parseval reads
``||f||_2^2 = sum |a_l|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

from .errors import ParameterError
from .pathint import ball_mask, mode_grid


def grid_size(min_points: int) -> int:
    return sfft.next_fast_len(int(min_points), real=True)


def synthesize(coeffs: np.ndarray, n: int, real: bool = True) -> np.ndarray:
    """Evaluate fields with coefficients ``coeffs[..., 2N+1, 2N+1]`` on an ``n x n`` grid."""
    size = coeffs.shape[-1]
    cutoff = (size - 1) // 2
    if n < size:
        raise ParameterError(f"grid of {n} points cannot carry cutoff {cutoff}")
    r = np.arange(-cutoff, cutoff + 1) % n
    lead = coeffs.shape[:-2]
    if real:
        half = np.zeros(lead + (n, n // 2 + 1), dtype=complex)
        pos = slice(cutoff, size)  # l2 >= 0
        half[..., r[:, None], np.arange(cutoff + 1)[None, :]] = coeffs[..., :, pos]
        return sfft.irfft2(half, s=(n, n), norm="forward", workers=-1)
    full = np.zeros(lead + (n, n), dtype=complex)
    full[..., r[:, None], r[None, :]] = coeffs
    return sfft.ifft2(full, norm="forward", workers=-1)


def analyze(values: np.ndarray, cutoff: int) -> np.ndarray:
    """Fourier coefficients ``|l| <= cutoff`` of grid values (last two axes)."""
    n = values.shape[-1]
    if n < 2 * cutoff + 1:
        raise ParameterError(f"grid of {n} points cannot resolve cutoff {cutoff}")
    r = np.arange(-cutoff, cutoff + 1)
    if np.iscomplexobj(values):
        full = sfft.fft2(values, norm="forward", workers=-1)
        out = full[..., (r % n)[:, None], (r % n)[None, :]]
    else:
        half = sfft.rfft2(values, norm="forward", workers=-1)
        l1, l2 = np.meshgrid(r, r, indexing="ij")
        neg = l2 < 0
        i1 = np.where(neg, -l1, l1) % n
        i2 = np.abs(l2)
        out = half[..., i1, i2]
        out = np.where(neg, np.conj(out), out)
    return out * ball_mask(cutoff)


def pad_coeffs(coeffs: np.ndarray, cutoff: int) -> np.ndarray:
    """Embed ``coeffs[..., 2K+1, 2K+1]`` into the box of a larger cutoff, or truncate."""
    k = (coeffs.shape[-1] - 1) // 2
    if cutoff == k:
        return coeffs
    if cutoff < k:
        d = k - cutoff
        return coeffs[..., d:d + 2 * cutoff + 1, d:d + 2 * cutoff + 1] * ball_mask(cutoff)
    d = cutoff - k
    out = np.zeros(coeffs.shape[:-2] + (2 * cutoff + 1, 2 * cutoff + 1), dtype=complex)
    out[..., d:d + 2 * k + 1, d:d + 2 * k + 1] = coeffs
    return out


def is_hermitian(coeffs: np.ndarray, tol: float = 0.0) -> bool:
    flipped = np.conj(coeffs[..., ::-1, ::-1])
    scale = max(np.abs(coeffs).max(initial=0.0), 1.0)
    return bool(np.all(np.abs(coeffs - flipped) <= tol * scale))


@dataclass(frozen=True, eq=False)
class SpectralField:
    cutoff: int
    coeffs: np.ndarray
    aliased: bool = False

    def __post_init__(self):
        if self.cutoff < 0:
            raise ParameterError("cutoff must be >= 0")
        c = np.asarray(self.coeffs, dtype=complex)
        size = 2 * self.cutoff + 1
        if c.shape != (size, size):
            raise ParameterError(f"coefficients must have shape {(size, size)}, got {c.shape}")
        c = c * ball_mask(self.cutoff)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # -- constructors --------------------------------------------------------

    @classmethod
    def zeros(cls, cutoff: int) -> "SpectralField":
        size = 2 * cutoff + 1
        return cls(cutoff, np.zeros((size, size), dtype=complex))

    @classmethod
    def constant(cls, value: float, cutoff: int = 0) -> "SpectralField":
        c = np.zeros((2 * cutoff + 1,) * 2, dtype=complex)
        c[cutoff, cutoff] = value
        return cls(cutoff, c)

    @classmethod
    def from_modes(cls, modes: dict, cutoff: Optional[int] = None) -> "SpectralField":
        """Field with the given ``{(l1, l2): coefficient}`` entries."""
        if cutoff is None:
            cutoff = max((math.ceil(math.hypot(*l)) for l in modes), default=0)
        c = np.zeros((2 * cutoff + 1,) * 2, dtype=complex)
        for (l1, l2), v in modes.items():
            if l1 * l1 + l2 * l2 > cutoff * cutoff:
                raise ParameterError(f"mode {(l1, l2)} lies outside the cutoff ball {cutoff}")
            c[l1 + cutoff, l2 + cutoff] += v
        return cls(cutoff, c)

    @classmethod
    def from_grid(cls, values: np.ndarray, cutoff: int) -> "SpectralField":
        return cls(cutoff, analyze(np.asarray(values), cutoff))

    # -- access ---------------------------------------------------------------

    def coeff(self, l) -> complex:
        l1, l2 = l
        if l1 * l1 + l2 * l2 > self.cutoff * self.cutoff:
            return 0j
        return complex(self.coeffs[l1 + self.cutoff, l2 + self.cutoff])

    def mean(self) -> float:
        return self.coeff((0, 0)).real

    @property
    def is_real(self) -> bool:
        return is_hermitian(self.coeffs, 1e-12)

    def pad(self, cutoff: int) -> "SpectralField":
        return SpectralField(cutoff, pad_coeffs(self.coeffs, cutoff), self.aliased)

    def to_grid(self, n: Optional[int] = None) -> np.ndarray:
        n = grid_size(2 * self.cutoff + 1) if n is None else n
        return synthesize(self.coeffs, n, real=self.is_real)

    def allclose(self, other: "SpectralField", atol: float = 1e-12) -> bool:
        k = max(self.cutoff, other.cutoff)
        return bool(np.allclose(pad_coeffs(self.coeffs, k), pad_coeffs(other.coeffs, k), rtol=0, atol=atol))

    # -- arithmetic -----------------------------------------------------------

    def _binary(self, other, op):
        k = max(self.cutoff, other.cutoff)
        return SpectralField(k, op(pad_coeffs(self.coeffs, k), pad_coeffs(other.coeffs, k)),
                             self.aliased or other.aliased)

    def __add__(self, other):
        if np.isscalar(other):
            other = SpectralField.constant(other)
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            other = SpectralField.constant(other)
        return self._binary(other, np.subtract)

    def __neg__(self):
        return SpectralField(self.cutoff, -self.coeffs, self.aliased)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return field_product(self, scalar)
        return SpectralField(self.cutoff, self.coeffs * scalar, self.aliased)

    __rmul__ = __mul__

    # -- serialization --------------------------------------------------------

    def to_table(self) -> str:
        lines = [f"# cutoff {self.cutoff}"]
        l1, l2 = mode_grid(self.cutoff)
        m = ball_mask(self.cutoff)
        for a, b, v in zip(l1[m], l2[m], self.coeffs[m]):
            lines.append(f"{a} {b} {v.real:.17g} {v.imag:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_table(cls, text: str) -> "SpectralField":
        cutoff, modes = None, {}
        for line in text.splitlines():
            if line.startswith("#"):
                cutoff = int(line.split()[-1])
            elif line.strip():
                a, b, re, im = line.split()
                modes[(int(a), int(b))] = float(re) + 1j * float(im)
        return cls.from_modes(modes, cutoff)


# -- Littlewood-Paley ----------------------------------------------------------

def smooth_cutoff(r):
    """``1`` on ``[0, 1/2]``, ``0`` on ``[1, inf)``, smooth in between."""
    r = np.asarray(r, dtype=float)

    def s(x):
        xs = np.where(x > 0, x, 1.0)
        return np.where(x > 0, np.exp(-1.0 / xs), 0.0)

    a, b = s(2.0 - 2.0 * r), s(2.0 * r - 1.0)
    return np.where(r <= 0.5, 1.0, np.where(r >= 1.0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))


class DyadicPartition:
    """Radial dyadic partition of unity with ``chi = psi(|x|/2)`` and
    ``rho = psi(|x|/4) - psi(|x|/2)``, so ``supp chi`` lies in ``B(2)`` and
    ``supp rho`` in ``B(4) \\ B(1)``; the blocks ``rho_m = rho(2^-m .)``
    telescope to one.
    """

    def __init__(self, profile: Callable = smooth_cutoff):
        self.profile = profile
        self._cache = {}

    def chi(self, r):
        return self.profile(np.asarray(r) / 2.0)

    def rho(self, r):
        r = np.asarray(r)
        return self.profile(r / 4.0) - self.profile(r / 2.0)

    def block(self, m: int, r):
        """``rho_m(r)``; ``m = -1`` is the low-frequency block ``chi``."""
        r = np.asarray(r, dtype=float)
        if m == -1:
            return self.chi(r)
        return self.profile(r / 2.0 ** (m + 2)) - self.profile(r / 2.0 ** (m + 1))

    @staticmethod
    def max_block(radius: float) -> int:
        """Largest ``m`` whose block meets ``|l| <= radius`` (``rho_m`` vanishes for ``|l| <= 2^m``)."""
        if radius <= 1:
            return -1
        return math.ceil(math.log2(radius)) - 1

    def multipliers(self, cutoff: int) -> dict:
        """``{m: rho_m(l)}`` tabulated on the ``(2N+1)^2`` mode box.

        Blocks are listed up to the box corners so that they sum to one at
        every tabulated mode; blocks beyond the ball ``|l| <= N`` vanish on
        band-limited fields.
        """
        if cutoff not in self._cache:
            l1, l2 = mode_grid(cutoff)
            r = np.sqrt(l1 * l1 + l2 * l2)
            top = self.max_block(math.sqrt(2.0) * cutoff)
            self._cache[cutoff] = {m: self.block(m, r) for m in range(-1, top + 1)}
        return self._cache[cutoff]

    def support_radius(self, m: int) -> float:
        return 2.0 if m == -1 else 2.0 ** (m + 2)


DEFAULT_PARTITION = DyadicPartition()


def _check_pq(p, q=1.0):
    for name, v in (("p", p), ("q", q)):
        if not (v >= 1 or v == math.inf):
            raise ParameterError(f"{name} must lie in [1, inf], got {v}")


def lp_norms(coeffs: np.ndarray, p: float, oversample: int = 4) -> np.ndarray:
    """``L^p`` norms (normalized measure) of fields ``coeffs[..., 2K+1, 2K+1]``.

    ``p = 2`` is exact (Parseval); otherwise the field is sampled on a grid
    ``oversample`` times finer than the minimal one.
    """
    _check_pq(p)
    if p == 2:
        return np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=(-2, -1)))
    # trim the box to the actual support before synthesizing
    k = (coeffs.shape[-1] - 1) // 2
    support = np.any(coeffs != 0, axis=tuple(range(coeffs.ndim - 2)))
    if not support.any():
        return np.zeros(coeffs.shape[:-2])
    l1, l2 = mode_grid(k)
    kk = int(math.ceil(np.sqrt((l1 * l1 + l2 * l2)[support].max())))
    c = pad_coeffs(coeffs, kk) if kk < k else coeffs
    n = grid_size(oversample * (2 * kk + 1))
    vals = np.abs(synthesize(c, n, real=is_hermitian(c, 1e-12)))
    if p == math.inf:
        return vals.max(axis=(-2, -1))
    return np.mean(vals ** p, axis=(-2, -1)) ** (1.0 / p)


def besov_norms(coeffs: np.ndarray, alpha: float, p: float = math.inf, q: float = math.inf,
                partition: DyadicPartition = DEFAULT_PARTITION, oversample: int = 4) -> np.ndarray:
    """Vectorized :func:`besov_norm` over leading axes of ``coeffs``."""
    _check_pq(p, q)
    if not math.isfinite(alpha):
        raise ParameterError("alpha must be finite")
    cutoff = (coeffs.shape[-1] - 1) // 2
    terms = []
    for m, mult in partition.multipliers(cutoff).items():
        block = coeffs * mult
        terms.append(2.0 ** (m * alpha) * lp_norms(block, p, oversample))
    terms = np.stack(terms, axis=-1)
    if q == math.inf:
        return terms.max(axis=-1)
    return np.sum(terms ** q, axis=-1) ** (1.0 / q)


def besov_norm(field: SpectralField, alpha: float, p: float = math.inf, q: float = math.inf,
               partition: DyadicPartition = DEFAULT_PARTITION, oversample: int = 4) -> float:
    """``|| 2^(m alpha) ||Delta_m f||_p ||_(l^q)`` over the blocks ``m >= -1``."""
    return float(besov_norms(field.coeffs, alpha, p, q, partition, oversample))


def sobolev_norm(field: SpectralField, alpha: float, p: float = 2.0, oversample: int = 4) -> float:
    """``L^p`` norm of ``(1 - Laplacian)^(alpha/2) f``."""
    l1, l2 = mode_grid(field.cutoff)
    w = (1.0 + l1 * l1 + l2 * l2) ** (alpha / 2.0)
    return float(lp_norms(field.coeffs * w, p, oversample))


def project_modes(field: SpectralField, cutoff: int) -> SpectralField:
    """``P_M``: keep ``|l| <= M``."""
    if cutoff < 0:
        raise ParameterError("cutoff must be >= 0")
    m = min(cutoff, field.cutoff)
    return SpectralField(field.cutoff, pad_coeffs(pad_coeffs(field.coeffs, m), field.cutoff), field.aliased)


def field_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Exact product; the result has cutoff ``N_f + N_g``."""
    k = f.cutoff + g.cutoff
    n = grid_size(2 * k + 1)
    real = f.is_real and g.is_real
    vals = synthesize(pad_coeffs(f.coeffs, k), n, real) * synthesize(pad_coeffs(g.coeffs, k), n, real)
    return SpectralField(k, analyze(vals, k))


def pointwise_map(field: SpectralField, phi: Callable, output_cutoff: int, degree: int) -> SpectralField:
    """Apply a polynomial ``phi`` of the given degree pointwise.

    Exact when ``output_cutoff >= degree * N``; otherwise the result is the
    truncation of the exact map and carries ``aliased=True``.
    """
    full = degree * field.cutoff
    k = max(full, output_cutoff)
    n = grid_size(2 * k + 1)
    vals = phi(synthesize(pad_coeffs(field.coeffs, k), n, field.is_real))
    c = pad_coeffs(analyze(vals, max(full, 0)), output_cutoff)
    return SpectralField(output_cutoff, c, aliased=output_cutoff < full)
