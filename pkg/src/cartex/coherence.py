"""Mutual and cluster coherence between the curvelet and Gabor frames.

All inner products are evaluated in the frequency domain. A curvelet
subband and a Gabor modulation box overlap on a small set of frequencies;
on that overlap the inner products against *all* translates of both atoms
reduce to one small FFT per atom, which makes exact cluster coherences
affordable at desk scale.

Functions here only read frame geometry, never signal data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .frames import CurveletFrame, GaborFrame, Wedge, n_orientations
from .windows import bump


# ---------------------------------------------------------------------------
# Index sets
# ---------------------------------------------------------------------------

@dataclass
class ClusterSet:
    """A set of frame indices (flat positions in the frame's coefficient vector).

    ``kind`` is ``"curvelet"`` or ``"gabor"``; ``geometry`` records how the
    set was generated; ``clipped`` flags radii that exceeded the lattice.
    """

    kind: str
    indices: np.ndarray
    geometry: dict = field(default_factory=dict)
    clipped: bool = False

    def __post_init__(self):
        if self.kind not in ("curvelet", "gabor"):
            raise ValueError(f"unknown frame kind {self.kind!r}")
        self.indices = np.unique(np.asarray(self.indices, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.indices.size)

    def union(self, other: "ClusterSet") -> "ClusterSet":
        if other.kind != self.kind:
            raise ValueError("cannot merge clusters of different frames")
        geometry = {"parts": [self.geometry, other.geometry]}
        return ClusterSet(self.kind, np.concatenate([self.indices, other.indices]),
                          geometry, self.clipped or other.clipped)

    def mask(self, size: int) -> np.ndarray:
        out = np.zeros(size, dtype=bool)
        out[self.indices] = True
        return out


@dataclass(frozen=True)
class RadiiSchedule:
    """Growth rules for the Gabor cluster radii.

    ``r1(j) = c1 * 2**(j * (1/(2 delta (1+delta)) + margin))`` bounds the
    translation index and ``r2(j) = c2 * 2**(j * (1/(2 (1+delta)) + margin))``
    the modulation index.
    """

    delta: float = 2.0
    margin: float = 0.05
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.margin > 0:
            raise ValueError("margin must be positive (strict growth)")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("radius constants must be positive")

    @property
    def exponent1(self) -> float:
        return 1.0 / (2.0 * self.delta * (1.0 + self.delta))

    @property
    def exponent2(self) -> float:
        return 1.0 / (2.0 * (1.0 + self.delta))

    def r1(self, j: int) -> float:
        return self.c1 * 2.0 ** (j * (self.exponent1 + self.margin))

    def r2(self, j: int) -> float:
        return self.c2 * 2.0 ** (j * (self.exponent2 + self.margin))


@dataclass
class FrequencyIndexSet:
    """Lattice points ``n`` whose scaled, rotated position meets a curvelet wedge."""

    j: int
    theta: float
    s: float
    points: np.ndarray  # (K, 2) integer lattice points

    def __len__(self) -> int:
        return int(self.points.shape[0])


# ---------------------------------------------------------------------------
# Cluster construction
# ---------------------------------------------------------------------------

def build_gabor_cluster(j: int, schedule: RadiiSchedule, frame: GaborFrame,
                        r1: Optional[float] = None, r2: Optional[float] = None) -> ClusterSet:
    """Closed-ball product ``{|m| <= r1} x {|n| <= r2}`` intersected with the frame lattice.

    ``m`` is the centred translation index and ``n`` the modulation. Radii
    default to ``schedule.r1(j)``, ``schedule.r2(j)``. Radii reaching beyond
    the lattice are clipped and flagged.
    """
    r1 = schedule.r1(j) if r1 is None else float(r1)
    r2 = schedule.r2(j) if r2 is None else float(r2)
    if r1 < 0 or r2 < 0:
        raise ValueError("radii must be non-negative")
    s = frame.s
    m = frame.centred_m()
    n = frame.modulations
    mm1, mm2 = np.meshgrid(m, m, indexing="ij")
    m_ok = mm1**2 + mm2**2 <= r1**2
    nn1, nn2 = np.meshgrid(n, n, indexing="ij")
    n_ok = nn1**2 + nn2**2 <= r2**2
    mi1, mi2 = np.nonzero(m_ok)
    ni1, ni2 = np.nonzero(n_ok)
    I1 = np.repeat(ni1, mi1.size)
    I2 = np.repeat(ni2, mi1.size)
    M1 = np.tile(mi1, ni1.size)
    M2 = np.tile(mi2, ni1.size)
    flat = np.ravel_multi_index((I1, M1, I2, M2), frame.shape)
    clipped = bool(r1 >= s or r2 > np.abs(n).max())
    geometry = {"r1": r1, "r2": r2, "j": int(j), "s": s}
    return ClusterSet("gabor", flat, geometry, clipped)


def _wedge_positions(w: Wedge) -> np.ndarray:
    b1, b2 = w.positions()
    return np.column_stack([b1.ravel(), b2.ravel()])


def build_curvelet_cluster(j: int, eps: float, boundary, tangents, frame: CurveletFrame,
                           angle_tol: Optional[float] = None) -> ClusterSet:
    """Phase-space tube of scale-``j`` curvelets around a curve.

    Keeps atoms whose position lies within torus distance ``a_j**(1-eps)``
    (``a_j = 2**-j``) of the sampled curve and whose orientation is within
    ``angle_tol`` (default ``sqrt(a_j)``), modulo pi, of the curve normal at
    the nearest sample. An empty sample array (no discontinuity) gives an
    empty cluster.
    """
    if not 0 < eps < 0.125:
        raise ValueError("eps must lie in (0, 1/8)")
    if boundary is None or tangents is None:
        raise ValueError("boundary samples and tangents are required")
    boundary = np.asarray(boundary, dtype=float).reshape(-1, 2)
    tangents = np.asarray(tangents, dtype=float).reshape(-1, 2)
    if boundary.shape != tangents.shape:
        raise ValueError("boundary and tangent arrays must match")
    a = 2.0 ** (-j)
    width = a ** (1.0 - eps)
    tol = math.sqrt(a) if angle_tol is None else float(angle_tol)
    geometry = {"j": int(j), "eps": eps, "tube_halfwidth": width, "angle_halfwidth": tol}
    wedges = frame.scale_wedges(j)
    if not wedges:
        raise IndexError(f"scale {j} not in the frame")
    if boundary.shape[0] == 0:
        return ClusterSet("curvelet", np.zeros(0, dtype=np.int64), geometry)
    normal = np.arctan2(tangents[:, 1], tangents[:, 0]) + 0.5 * np.pi
    tree = cKDTree(np.mod(boundary, 1.0) % 1.0, boxsize=1.0)
    chosen = []
    for w in wedges:
        pos = _wedge_positions(w)
        dist, nearest = tree.query(pos, k=1)
        d = np.mod(w.theta - normal[nearest], np.pi)
        gap = np.minimum(d, np.pi - d)
        keep = np.flatnonzero((dist <= width) & (gap <= tol))
        chosen.append(w.offset + keep)
    return ClusterSet("curvelet", np.concatenate(chosen), geometry)


def curvelet_cluster_for_band(j: int, eps: float, boundary, tangents, frame: CurveletFrame,
                              angle_tol: Optional[float] = None) -> ClusterSet:
    """Union of the tubes at every curvelet scale of ``frame`` adjacent to ``j``."""
    parts = [build_curvelet_cluster(jj, eps, boundary, tangents, frame, angle_tol)
             for jj in frame.scales if abs(jj - j) <= 1]
    out = parts[0]
    for p in parts[1:]:
        out = out.union(p)
    return out


def _sector_distance(x: np.ndarray, y: np.ndarray, r0: float, r1: float, half: float) -> np.ndarray:
    """Euclidean distance from points to ``{r0 <= r <= r1, |angle| <= half}``."""
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    if half >= np.pi:
        return np.maximum(np.maximum(r0 - r, r - r1), 0.0)
    inside_angle = np.abs(phi) <= half
    out = np.full(x.shape, np.inf)
    radial = np.maximum(np.maximum(r0 - r, r - r1), 0.0)
    out = np.where(inside_angle, radial, out)
    for sgn in (1.0, -1.0):
        ux, uy = math.cos(sgn * half), math.sin(sgn * half)
        t = np.clip(x * ux + y * uy, r0, r1)
        out = np.minimum(out, np.hypot(x - t * ux, y - t * uy))
    return out


def m_set(j: int, theta: float, s: float, frame: Optional[CurveletFrame] = None) -> FrequencyIndexSet:
    """Lattice points ``n`` with ``s R_{-theta} n`` within distance 1 of the scale-``j`` wedge.

    The wedge is the continuous support ``2**(j-1) < |xi| < 2**(j+1)``,
    ``|angle| < 2 pi / L_j`` of the orientation-0 window. ``frame`` is only
    used to check that scale ``j`` exists.
    """
    if frame is not None and j not in frame.scales:
        raise IndexError(f"scale {j} not in the frame")
    if not s > 0:
        raise ValueError("s must be positive")
    half = 2.0 * np.pi / n_orientations(j)
    r0, r1 = 2.0 ** (j - 1), 2.0 ** (j + 1)
    reach = int(math.ceil((r1 + 1.0) / s)) + 1
    g = np.arange(-reach, reach + 1)
    n1, n2 = np.meshgrid(g, g, indexing="ij")
    c, sn = math.cos(theta), math.sin(theta)
    x = s * (c * n1 + sn * n2)
    y = s * (-sn * n1 + c * n2)
    keep = _sector_distance(x, y, r0, r1, half) <= 1.0
    pts = np.column_stack([n1[keep], n2[keep]]).astype(np.int64)
    return FrequencyIndexSet(int(j), float(theta), float(s), pts)


# ---------------------------------------------------------------------------
# Coefficient-side quantities
# ---------------------------------------------------------------------------

def relative_sparsity(coeffs: np.ndarray, cluster: ClusterSet) -> float:
    """l1 mass of the coefficients outside the cluster."""
    c = np.abs(np.asarray(coeffs).ravel())
    total = float(c.sum())
    inside = float(c[cluster.indices].sum()) if len(cluster) else 0.0
    return max(total - inside, 0.0)


@dataclass(frozen=True)
class Bound:
    value: float
    diverged: bool


def error_bound(delta1: float, delta2: float, mu_c: float) -> Bound:
    """``2 (delta1 + delta2) / (1 - 2 mu_c)``; diverged (infinite) when ``mu_c >= 1/2``."""
    if delta1 < 0 or delta2 < 0 or mu_c < 0:
        raise ValueError("sparsity defects and coherence must be non-negative")
    if mu_c >= 0.5:
        return Bound(math.inf, True)
    return Bound(2.0 * (delta1 + delta2) / (1.0 - 2.0 * mu_c), False)


# ---------------------------------------------------------------------------
# Inner products between curvelets and Gabor atoms
# ---------------------------------------------------------------------------

@dataclass
class _Overlap:
    wedge: Wedge
    n: tuple[int, int]
    k1: np.ndarray  # signed grid frequencies of the overlap
    k2: np.ndarray
    h: np.ndarray  # curvelet window * Gabor window (* band mask)
    residues: np.ndarray  # positions of the overlap in the wedge's fold block


def _overlaps(curv: CurveletFrame, wedges: Iterable[Wedge], gabor: GaborFrame,
              band: Optional[np.ndarray]) -> Iterator[_Overlap]:
    grid = curv.grid
    s = gabor.s
    K1 = grid.kappa[0].ravel()
    K2 = grid.kappa[1].ravel()
    mask = None if band is None else np.asarray(band, dtype=float).ravel()
    mods = set(int(v) for v in gabor.modulations)
    for w in wedges:
        k1, k2 = K1[w.support], K2[w.support]
        vals = w.values if mask is None else w.values * mask[w.support]
        lo1, hi1 = math.floor(k1.min() / s) - 1, math.ceil(k1.max() / s) + 1
        lo2, hi2 = math.floor(k2.min() / s) - 1, math.ceil(k2.max() / s) + 1
        for n1 in range(lo1, hi1 + 1):
            if n1 not in mods:
                continue
            g1 = bump((k1 - s * n1) / s)
            sel1 = g1 > 0
            if not sel1.any():
                continue
            for n2 in range(lo2, hi2 + 1):
                if n2 not in mods:
                    continue
                g = g1 * bump((k2 - s * n2) / s)
                h = vals * g
                sel = np.flatnonzero(h != 0)
                if sel.size == 0:
                    continue
                yield _Overlap(w, (n1, n2), k1[sel], k2[sel], h[sel], w.residues[sel])


def _group_curvelet(curv: CurveletFrame, indices: np.ndarray):
    """Split flat curvelet indices into ``{wedge: (k1, k2)}``."""
    out = {}
    for w in curv.wedges:
        sel = indices[(indices >= w.offset) & (indices < w.offset + w.size)] - w.offset
        if sel.size:
            out[id(w)] = (w, np.divmod(sel, w.P[1]))
    return out


def _group_gabor(gabor: GaborFrame, indices: np.ndarray):
    """Split flat Gabor indices into ``{(n1, n2): (m1, m2)}`` (raw m in [0, 2s))."""
    i1, m1, i2, m2 = np.unravel_index(indices, gabor.shape)
    n = gabor.modulations
    out = {}
    keys = n[i1] * 1_000_003 + n[i2]
    for key in np.unique(keys):
        sel = keys == key
        out[(int(n[i1[sel][0]]), int(n[i2[sel][0]]))] = (m1[sel], m2[sel])
    return out


_CHUNK = 64


def _curvelet_cluster_sums(curv, gabor, cluster_idx, band, wedges):
    """``acc[(n1, n2)][m1, m2] = sum_{eta in cluster} |<gamma_eta, g_{m,n}>|``."""
    s2 = 2 * gabor.s
    groups = _group_curvelet(curv, cluster_idx)
    acc: dict = {}
    use = [w for w in wedges if id(w) in groups]
    for ov in _overlaps(curv, use, gabor, band):
        w = ov.wedge
        k1s, k2s = groups[id(w)][1]
        scale = s2 / math.sqrt(w.size)
        res = np.mod(ov.k1, s2) * s2 + np.mod(ov.k2, s2)
        tot = acc.setdefault(ov.n, np.zeros((s2, s2)))
        for start in range(0, k1s.size, _CHUNK):
            b1 = k1s[start:start + _CHUNK, None] / w.P[0]
            b2 = k2s[start:start + _CHUNK, None] / w.P[1]
            F = ov.h[None, :] * np.exp(-2j * np.pi * (ov.k1[None, :] * b1 + ov.k2[None, :] * b2))
            folded = np.zeros((F.shape[0], s2 * s2), dtype=complex)
            folded[:, res] = F
            G = np.fft.ifft2(folded.reshape(-1, s2, s2), axes=(1, 2))
            tot += scale * np.abs(G).sum(axis=0)
    return acc


def _gabor_cluster_sums(curv, gabor, cluster_idx, band, wedges):
    """``acc[id(wedge)][k] = sum_{lambda in cluster} |<g_lambda, gamma_{wedge,k}>|``."""
    s2 = 2 * gabor.s
    groups = _group_gabor(gabor, cluster_idx)
    acc: dict = {}
    for ov in _overlaps(curv, wedges, gabor, band):
        if ov.n not in groups:
            continue
        w = ov.wedge
        m1s, m2s = groups[ov.n]
        scale = 1.0 / (s2 * math.sqrt(w.size))
        tot = acc.setdefault(id(w), (w, np.zeros(w.P)))[1]
        for start in range(0, m1s.size, _CHUNK):
            c1 = m1s[start:start + _CHUNK, None] / s2
            c2 = m2s[start:start + _CHUNK, None] / s2
            F = ov.h[None, :] * np.exp(2j * np.pi * (ov.k1[None, :] * c1 + ov.k2[None, :] * c2))
            folded = np.zeros((F.shape[0], w.size), dtype=complex)
            folded[:, ov.residues] = F
            G = np.fft.fft2(folded.reshape(-1, *w.P), axes=(1, 2))
            tot += scale * np.abs(G).sum(axis=0)
    return acc


def _scale_wedges(curv: CurveletFrame, scales: Optional[Sequence[int]]):
    if scales is None:
        return list(curv.wedges)
    scales = set(scales)
    return [w for w in curv.wedges if w.j in scales]


def cluster_coherence(cluster: ClusterSet, curv: CurveletFrame, gabor: GaborFrame,
                      band: Optional[np.ndarray] = None,
                      scales: Optional[Sequence[int]] = None) -> float:
    """Exact ``max_psi sum_{i in cluster} |<phi_i, psi>|`` between the two frames.

    For a curvelet cluster the candidates ``psi`` are all Gabor atoms, for a
    Gabor cluster all curvelets (optionally only the given ``scales``).
    Candidates whose spectrum misses the cluster atoms contribute zero, so
    the maximum over the overlapping ones is exact. ``band`` (a spectral
    mask) replaces each atom by its projection onto the band, matching the
    restricted frames used for per-scale separation.
    """
    if len(cluster) == 0:
        return 0.0
    wedges = _scale_wedges(curv, scales)
    if cluster.kind == "curvelet":
        acc = _curvelet_cluster_sums(curv, gabor, cluster.indices, band, _scale_wedges(curv, None))
        return max((float(a.max()) for a in acc.values()), default=0.0)
    acc = _gabor_cluster_sums(curv, gabor, cluster.indices, band, wedges)
    return max((float(a.max()) for _, a in acc.values()), default=0.0)


def curvelet_gabor_coherence(curv: CurveletFrame, gabor: GaborFrame,
                             band: Optional[np.ndarray] = None,
                             scales: Optional[Sequence[int]] = None) -> float:
    """Mutual coherence ``max |<gamma, g>|`` over all curvelets of ``scales`` and all Gabor atoms."""
    best = 0.0
    for w in _scale_wedges(curv, scales):
        for ov in _overlaps(curv, [w], gabor, band):
            s2 = 2 * gabor.s
            res = np.mod(ov.k1, s2) * s2 + np.mod(ov.k2, s2)
            scale = s2 / math.sqrt(w.size)
            k1, k2 = np.divmod(np.arange(w.size), w.P[1])
            for start in range(0, w.size, _CHUNK):
                b1 = k1[start:start + _CHUNK, None] / w.P[0]
                b2 = k2[start:start + _CHUNK, None] / w.P[1]
                F = ov.h[None, :] * np.exp(-2j * np.pi * (ov.k1[None, :] * b1 + ov.k2[None, :] * b2))
                folded = np.zeros((F.shape[0], s2 * s2), dtype=complex)
                folded[:, res] = F
                G = np.fft.ifft2(folded.reshape(-1, s2, s2), axes=(1, 2))
                best = max(best, scale * float(np.abs(G).max()))
    return best


def mutual_coherence(frame_a, window_a: Sequence, frame_b, window_b: Sequence,
                     chunk: int = 32) -> float:
    """``max |<phi_i, psi_k>|`` over two finite index windows (dense spectra)."""
    window_a, window_b = list(window_a), list(window_b)
    if not window_a or not window_b:
        raise ValueError("index windows must be non-empty")
    B = np.stack([frame_b.atom_spectrum(i).ravel() for i in window_b])
    best = 0.0
    for start in range(0, len(window_a), chunk):
        A = np.stack([frame_a.atom_spectrum(i).ravel() for i in window_a[start:start + chunk]])
        best = max(best, float(np.abs(A @ B.conj().T).max()))
    return best


def pair_inner(curv: CurveletFrame, eta, gabor: GaborFrame, lam) -> complex:
    """``<gamma_eta, g_lambda>`` summed over the overlap of their spectral supports."""
    w = curv.wedge(eta.j, eta.ell)
    curv.flat_index(eta)
    gabor.flat_index(lam)
    grid = curv.grid
    k1 = grid.kappa[0].ravel()[w.support]
    k2 = grid.kappa[1].ravel()[w.support]
    s = gabor.s
    g = bump((k1 - s * lam.n[0]) / s) * bump((k2 - s * lam.n[1]) / s)
    sel = g != 0
    if not sel.any():
        return 0j
    a = w.values[sel] / math.sqrt(w.size) * np.exp(
        -2j * np.pi * (k1[sel] * eta.k[0] / w.P[0] + k2[sel] * eta.k[1] / w.P[1]))
    ghat = g[sel] * np.exp(-2j * np.pi * (k1[sel] * lam.m[0] + k2[sel] * lam.m[1]) / (2 * s)) / (2 * s)
    return complex(np.sum(a * np.conj(ghat)))
