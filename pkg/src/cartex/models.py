"""Synthetic cartoon and texture fields and the energy-matching rule."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft as sfft

from .frames import GaborFrame
from .grid import GridSpec, to_field, to_spectrum


# ---------------------------------------------------------------------------
# Cartoon
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpProfile:
    """Smooth amplitude profile ``amplitude * (1 - |x-c|^2/R^2)^3_+``.

    ``radius=None`` gives the constant ``amplitude`` (the limit ``R -> inf``).
    The profile is C^2 with compact support whenever ``radius`` is finite.
    """

    amplitude: float = 0.0
    radius: Optional[float] = None

    def __call__(self, dist2: np.ndarray) -> np.ndarray:
        if self.radius is None:
            return np.full_like(dist2, float(self.amplitude))
        t = np.clip(1.0 - dist2 / self.radius**2, 0.0, None)
        return self.amplitude * t**3


@dataclass(frozen=True)
class CartoonSpec:
    """Cartoon ``f0 + f1 * 1_B`` bounded by a smooth closed curve.

    The boundary is ``center + rho(t) (cos t, sin t)`` where ``rho`` is the
    polar radius of an ellipse with the given semi-axes and rotation,
    optionally modulated by ``1 + sum_k (a_k cos kt + b_k sin kt)``
    (``harmonics`` holds ``(k, a_k, b_k)`` triples). The profiles ``f0`` and
    ``f1`` are centred on ``center``.
    """

    center: tuple[float, float] = (0.5, 0.5)
    semi_axes: tuple[float, float] = (0.3, 0.2)
    rotation: float = 0.3
    harmonics: tuple = ()
    f0: BumpProfile = BumpProfile(0.0)
    f1: BumpProfile = BumpProfile(1.0)
    boundary_samples: int = 4096

    @classmethod
    def disk(cls, radius: float = 0.25, center=(0.5, 0.5), **kw) -> "CartoonSpec":
        return cls(center=center, semi_axes=(radius, radius), rotation=0.0, **kw)

    def rho(self, t: np.ndarray) -> np.ndarray:
        a, b = self.semi_axes
        u = t - self.rotation
        r = a * b / np.sqrt((b * np.cos(u)) ** 2 + (a * np.sin(u)) ** 2)
        mod = np.ones_like(t)
        for k, ak, bk in self.harmonics:
            mod += ak * np.cos(k * t) + bk * np.sin(k * t)
        return r * mod

    def boundary(self, samples: Optional[int] = None):
        """Boundary points and unit tangents, counter-clockwise, ``(M, 2)`` each."""
        M = samples or self.boundary_samples
        t = 2 * np.pi * np.arange(M) / M
        h = 1e-6
        r = self.rho(t)
        dr = (self.rho(t + h) - self.rho(t - h)) / (2 * h)
        c, s = np.cos(t), np.sin(t)
        pts = np.stack([self.center[0] + r * c, self.center[1] + r * s], axis=1)
        tan = np.stack([dr * c - r * s, dr * s + r * c], axis=1)
        tan /= np.linalg.norm(tan, axis=1, keepdims=True)
        return pts, tan

    def validate(self) -> None:
        if min(self.semi_axes) <= 0:
            raise ValueError("semi-axes must be positive")
        pts, _ = self.boundary()
        if pts.min() <= 0 or pts.max() >= 1:
            raise ValueError("boundary curve leaves the fundamental domain [0, 1)^2")
        t = 2 * np.pi * np.arange(self.boundary_samples) / self.boundary_samples
        h = 1e-4
        r, r1 = self.rho(t), (self.rho(t + h) - self.rho(t - h)) / (2 * h)
        r2 = (self.rho(t + h) - 2 * r + self.rho(t - h)) / h**2
        if np.any(r <= 0) or np.any(r**2 + 2 * r1**2 - r * r2 <= 0):
            raise ValueError("boundary curve is not strictly convex")


def winding_number(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Winding number of a closed polygon around each query point.

    Uses signed crossings of the horizontal ray ``{(x0, y) : y > y_q}`` in the
    query's row. ``points`` is ``(..., 2)``; returns an integer array.
    """
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 2)
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    out = np.zeros(flat.shape[0], dtype=np.int64)
    rows, inverse = np.unique(flat[:, 0], return_inverse=True)
    for i, x0 in enumerate(rows):
        up = (a[:, 0] <= x0) & (b[:, 0] > x0)
        down = (a[:, 0] > x0) & (b[:, 0] <= x0)
        hit = up | down
        if not hit.any():
            continue
        ah, bh = a[hit], b[hit]
        y = ah[:, 1] + (x0 - ah[:, 0]) * (bh[:, 1] - ah[:, 1]) / (bh[:, 0] - ah[:, 0])
        sign = np.where(up[hit], 1, -1)
        sel = np.flatnonzero(inverse == i)
        yq = flat[sel, 1]
        out[sel] = ((y[None, :] > yq[:, None]) * sign[None, :]).sum(axis=1)
    return np.abs(out).reshape(pts.shape[:-1])


@dataclass
class Cartoon:
    field: np.ndarray
    boundary: np.ndarray
    tangents: np.ndarray
    inside: np.ndarray


def build_cartoon(spec: CartoonSpec, grid: GridSpec) -> Cartoon:
    """Point-sample ``f0 + f1 * 1_B`` on the grid.

    Membership of each sample is decided by the winding number of the densely
    sampled boundary polygon.
    """
    spec.validate()
    pts, tan = spec.boundary()
    x1, x2 = grid.points
    inside = winding_number(np.stack([x1, x2], axis=-1), pts) != 0
    d2 = (x1 - spec.center[0]) ** 2 + (x2 - spec.center[1]) ** 2
    f = spec.f0(d2) + spec.f1(d2) * inside
    return Cartoon(f, pts, tan, inside)


def fourier_decay_exponent(C: np.ndarray, band=None, bins: int = 16) -> float:
    """Fitted exponent ``alpha`` in ``|C_hat(xi)| ~ |xi|**alpha``.

    For every integer frequency shell ``|xi| ~ r`` in ``band`` (default
    ``[4, N/8]``, below the range where point-sampling artefacts flatten the
    spectrum) the angular maximum of ``|C_hat|`` is taken. Shells are grouped
    into logarithmically spaced bins so every octave carries equal weight,
    and a least-squares line is fitted to the bin means in log-log coordinates.
    """
    C = np.asarray(C)
    grid = GridSpec(C.shape[0])
    mag = np.abs(to_spectrum(grid.check(C)))
    if not np.any(mag > 0):
        raise ValueError("cannot fit a decay exponent to a zero field")
    lo, hi = band if band is not None else (4.0, grid.N / 8)
    shell = np.floor(grid.radius + 0.5).astype(np.int64).ravel()
    peak = np.zeros(shell.max() + 1)
    np.maximum.at(peak, shell, mag.ravel())
    radii = np.arange(max(int(math.ceil(lo)), 1), int(math.floor(hi)) + 1)
    radii = radii[peak[radii] > 0]
    edges = np.geomspace(lo, hi, bins + 1)
    edges[-1] = np.nextafter(edges[-1], np.inf)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = radii[(radii >= a) & (radii < b)]
        if sel.size:
            xs.append(np.mean(np.log(sel)))
            ys.append(np.mean(np.log(peak[sel])))
    if len(xs) < 2:
        raise ValueError("decay band holds fewer than two populated bins")
    return float(np.polyfit(xs, ys, 1)[0])


# ---------------------------------------------------------------------------
# Texture
# ---------------------------------------------------------------------------

def _uniform_hash(seed: int, *ints: np.ndarray) -> np.ndarray:
    """Deterministic uniform [0, 1) values from integer tuples (splitmix64 mix)."""
    mask = np.uint64(0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        h = np.full(np.broadcast(*ints).shape, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
        for v in ints:
            h = h ^ (np.asarray(v).astype(np.int64).astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15))
            h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            h = (h ^ (h >> np.uint64(31))) & mask
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


@dataclass(frozen=True)
class TextureSpec:
    """Texture ``T_s = sum_{m,n} d_{m,n} g_s(x - m/(2s)) e^{2 pi i s n . x}``.

    Coefficients have magnitude
    ``amplitude * max(|m|,1)**-(2+delta) * max(|n|,1)**-(2+delta)``.
    With ``phases="random"`` each coefficient carries a seeded pseudo-random
    phase arranged so that ``d_{m,-n} = conj(d_{m,n})`` (a real field);
    ``phases="positive"`` makes every coefficient real and positive.
    Indices are truncated to ``|m| <= spatial_factor * s`` and, per axis,
    ``|s n_i| + s <= N/2`` so every atom lies strictly below Nyquist (or
    ``|n_i| <= freq_radius`` when given).
    """

    delta: float = 2.0
    s: int = 16
    amplitude: float = 1.0
    phases: str = "random"
    seed: int = 0
    spatial_factor: float = 4.0
    freq_radius: Optional[int] = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.phases not in ("random", "positive"):
            raise ValueError(f"unknown phase rule {self.phases!r}")
        s = int(round(self.s))
        if s < 1:
            raise ValueError("s must be a positive integer")
        object.__setattr__(self, "s", s)

    def with_size(self, s: int) -> "TextureSpec":
        return TextureSpec(self.delta, s, self.amplitude, self.phases, self.seed,
                           self.spatial_factor, self.freq_radius)

    def m_radius(self) -> float:
        return self.spatial_factor * self.s

    def n_radius(self, N: int) -> int:
        if self.freq_radius is not None:
            return int(self.freq_radius)
        # keep every atom's open support (s n - s, s n + s) strictly below Nyquist
        return max((N // 2) // self.s - 1, 0)


def _magnitude(spec: TextureSpec, m1, m2, n1, n2):
    p = 2.0 + spec.delta
    am = np.maximum(np.hypot(m1, m2), 1.0) ** -p
    an = np.maximum(np.hypot(n1, n2), 1.0) ** -p
    return spec.amplitude * am * an


def _phase(spec: TextureSpec, m1, m2, n1, n2):
    if spec.phases == "positive":
        return np.ones(np.broadcast(m1, m2, n1, n2).shape, dtype=complex)
    n1 = np.asarray(n1)
    n2 = np.asarray(n2)
    canonical = (n1 > 0) | ((n1 == 0) & (n2 >= 0))
    c1 = np.where(canonical, n1, -n1)
    c2 = np.where(canonical, n2, -n2)
    u = _uniform_hash(spec.seed, m1, m2, c1, c2)
    zero = (n1 == 0) & (n2 == 0)
    angle = np.where(zero, np.where(u < 0.5, 0.0, np.pi), 2 * np.pi * u)
    angle = np.where(canonical, angle, -angle)
    return np.exp(1j * angle)


def texture_coefficient(spec: TextureSpec, m, n) -> complex:
    """The coefficient ``d_{m,n}`` (ignores truncation)."""
    m1, m2 = m
    n1, n2 = n
    return complex(_magnitude(spec, m1, m2, n1, n2) * _phase(spec, m1, m2, n1, n2))


def _index_box(spec: TextureSpec, N: int):
    R = spec.m_radius()
    Ri = int(math.floor(R))
    mr = np.arange(-Ri, Ri + 1)
    nr = np.arange(-spec.n_radius(N), spec.n_radius(N) + 1)
    return mr, nr


def texture_coefficients(spec: TextureSpec, N: int) -> np.ndarray:
    """Truncated coefficients as a 4-D array indexed ``[m1, m2, n1, n2]``.

    Axes are centred: entry ``[i1, i2, k1, k2]`` holds ``d`` for
    ``m = (i - Ri)`` and ``n = (k - Rn)``. Entries outside the spatial ball are 0.
    """
    mr, nr = _index_box(spec, N)
    M1, M2, N1, N2 = np.meshgrid(mr, mr, nr, nr, indexing="ij", sparse=True)
    d = _magnitude(spec, M1, M2, N1, N2) * _phase(spec, M1, M2, N1, N2)
    inside = (M1**2 + M2**2) <= spec.m_radius() ** 2
    return np.where(inside, d, 0.0)


def fold_coefficients(spec: TextureSpec, frame: GaborFrame, d: Optional[np.ndarray] = None) -> np.ndarray:
    """Reduce ``m`` modulo ``2s`` and place coefficients in the frame's layout."""
    N = frame.grid.N
    if d is None:
        d = texture_coefficients(spec, N)
    mr, nr = _index_box(spec, N)
    s2 = 2 * frame.s
    folded = np.zeros((s2, s2) + d.shape[2:], dtype=complex)
    r = np.mod(mr, s2)
    np.add.at(folded, (r[:, None], r[None, :]), d)
    # folded[m1, m2, n1, n2] -> frame layout [n1, m1, n2, m2]
    out = np.zeros(frame.shape, dtype=complex)
    pos = nr - frame.modulations[0]
    if pos.min() < 0 or pos.max() >= frame.modulations.size:
        raise ValueError(f"texture modulation s*n exceeds the grid band for N={N}")
    out[np.ix_(pos, np.arange(s2), pos, np.arange(s2))] = folded.transpose(2, 0, 3, 1)
    return out


def build_texture(spec: TextureSpec, grid: GridSpec, d: Optional[np.ndarray] = None) -> np.ndarray:
    """Assemble ``T_s`` as a superposition of Gabor atoms in the frequency domain.

    ``d`` optionally replaces the model coefficients (same layout as
    :func:`texture_coefficients`). Returns a real field when the
    coefficients are conjugate-symmetric in ``n``.
    """
    if (spec.n_radius(grid.N) + 1) * spec.s > grid.N // 2:
        raise ValueError(f"frequency truncation s*|n| exceeds Nyquist for N={grid.N}")
    frame = GaborFrame(grid, spec.s)
    c = fold_coefficients(spec, frame, d)
    f = to_field(frame.synthesis_spectrum(c.ravel()))
    if np.max(np.abs(f.imag)) <= 1e-12 * max(np.max(np.abs(f.real)), 1e-300):
        return f.real
    return f


@dataclass(frozen=True)
class AnnulusSpec:
    """Lattice annulus ``2**(j-1)/s <= |n| <= 2**(j+1)/s``."""

    j: int
    s: int

    @property
    def inner(self) -> float:
        return 2.0 ** (self.j - 1) / self.s

    @property
    def outer(self) -> float:
        return 2.0 ** (self.j + 1) / self.s

    def points(self, limit: Optional[int] = None) -> np.ndarray:
        R = int(math.floor(self.outer)) if limit is None else min(int(math.floor(self.outer)), limit)
        r = np.arange(-R, R + 1)
        n1, n2 = np.meshgrid(r, r, indexing="ij")
        rad = np.hypot(n1, n2)
        sel = (rad >= self.inner) & (rad <= self.outer)
        return np.stack([n1[sel], n2[sel]], axis=1)


def _lemma_sum(spec: TextureSpec, pts: np.ndarray, window_energy: float) -> float:
    """``window_energy * sum_{n in pts} sum_{m,m'} e^{-|m-m'|/2} d_{m,n} conj(d_{m',n})``.

    The double sum over positions is a discrete autocorrelation against the
    kernel ``e^{-|m|/2}``, evaluated exactly by zero-padded FFT convolution
    over the truncated index set.
    """
    if pts.size == 0:
        return 0.0
    R = int(math.floor(spec.m_radius()))
    mr = np.arange(-R, R + 1)
    M1, M2 = np.meshgrid(mr, mr, indexing="ij")
    inside = (M1**2 + M2**2) <= spec.m_radius() ** 2
    P = sfft.next_fast_len(2 * mr.size - 1)
    kr = np.arange(-(mr.size - 1), mr.size)
    K1, K2 = np.meshgrid(kr, kr, indexing="ij")
    kernel = np.zeros((P, P))
    kernel[np.mod(K1, P), np.mod(K2, P)] = np.exp(-0.5 * np.hypot(K1, K2))
    kernel_hat = sfft.fft2(kernel)
    total = 0.0
    for n1, n2 in pts:
        d = np.where(inside, _magnitude(spec, M1, M2, n1, n2) * _phase(spec, M1, M2, n1, n2), 0.0)
        pad = np.zeros((P, P), dtype=complex)
        pad[: mr.size, : mr.size] = d
        conv = sfft.ifft2(sfft.fft2(pad) * kernel_hat)
        total += float(np.real(np.vdot(d, conv[: mr.size, : mr.size])))
    return window_energy * total


def texture_band_norm(spec: TextureSpec, s: int, j: int, N: Optional[int] = None,
                      window_energy: float = 0.25) -> float:
    """Band-energy expression of the texture with size ``s`` at scale ``j``.

    ``||g||^2 sum_{m,m'} e^{-|m-m'|/2} sum_{n in A_{s,j}} d_{m,n} conj(d_{m',n})``
    where ``A_{s,j}`` is the lattice annulus of :class:`AnnulusSpec`.
    ``window_energy`` is ``||g_s||^2`` (the energy of a single Gabor atom);
    ``N`` sets the frequency truncation (default: none beyond the annulus).
    """
    spec = spec.with_size(s)
    limit = spec.n_radius(N) if N is not None else None
    return _lemma_sum(spec, AnnulusSpec(j, spec.s).points(limit), window_energy)


def texture_total_norm(spec: TextureSpec, N: int, window_energy: float = 0.25) -> float:
    """The same expression summed over every modulation kept on an ``N`` grid."""
    nr = spec.n_radius(N)
    r = np.arange(-nr, nr + 1)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    return _lemma_sum(spec, np.stack([n1.ravel(), n2.ravel()], axis=1), window_energy)


def energy_match_closed_form(j: int, delta: float) -> int:
    """Texture size ``s_j = 2**(j (1 + 2 delta) / (2 + 2 delta))``, rounded (at least 1)."""
    if j < 0 or not delta > 0:
        raise ValueError("need j >= 0 and delta > 0")
    return max(1, int(round(2.0 ** (j * (1 + 2 * delta) / (2 + 2 * delta)))))


def energy_match_numeric(j: int, spec: TextureSpec, target: Optional[float] = None) -> int:
    """Integer ``s`` whose band expression is closest to ``target`` (default ``2**-j``).

    The band expression (:func:`texture_band_norm` with unit window energy)
    grows with ``s`` as the lattice annulus ``A_{s,j}`` moves towards the
    large low-order coefficients. ``s`` is bracketed by doubling until the
    expression reaches ``target`` and the bracket is then scanned for the
    minimiser of ``|LHS(s) - target|``.
    """
    target = 2.0 ** (-j) if target is None else float(target)
    s_max = 2 ** (j + 1)  # beyond this the annulus holds no lattice point

    def lhs(s):
        return texture_band_norm(spec, s, j, window_energy=1.0)

    lo, hi = 1, 1
    values = {1: lhs(1)}
    while values[hi] < target:
        if hi >= s_max:
            if max(values.values()) == 0.0:
                raise ValueError("band expression is identically zero; no s matches")
            raise ValueError(f"no s in [1, {s_max}] reaches the target {target:.3g} at j={j}")
        lo, hi = hi, min(2 * hi, s_max)
        values[hi] = lhs(hi)
    for s in range(lo, hi + 1):
        if s not in values:
            values[s] = lhs(s)
    return min(range(lo, hi + 1), key=lambda s: (abs(values[s] - target), s))
