"""Curvelet and Gabor Parseval frames on the periodic grid.

Both systems are built on integer frequencies. Each atom's spectrum is a
smooth window times a translation phase; coefficients are computed subband by
subband by folding the windowed spectrum onto a small rectangle and taking an
inverse FFT there. As long as a window's support hits every residue class of
its rectangle at most once, the folding is lossless and the system is exactly
Parseval (``sum |<f, phi>|^2 = ||f||^2`` and synthesis inverts analysis).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import fft as sfft

from .grid import GridSpec, to_field, to_spectrum
from .windows import angular_window, bump, radial_window, wrap_angle


def n_orientations(j: int) -> int:
    """Number of orientations at scale ``j`` over the full circle."""
    return 2 ** math.ceil(j / 2)


@dataclass(frozen=True)
class CurveletIndex:
    j: int
    ell: int
    k: tuple[int, int]


@dataclass(frozen=True)
class GaborIndex:
    m: tuple[int, int]
    n: tuple[int, int]


@dataclass(eq=False)
class Wedge:
    """One (scale, orientation) subband of the curvelet frame.

    ``j == j0 - 1`` marks the isotropic low-pass channel. Coefficients of the
    subband sit at torus positions ``(k1 / P[0], k2 / P[1])``.
    """

    j: int
    ell: int
    theta: float
    support: np.ndarray  # flat indices into the unshifted N x N spectrum
    values: np.ndarray  # window values on ``support``
    P: tuple[int, int]
    residues: np.ndarray  # flat indices into the P[0] x P[1] block
    offset: int = 0
    lowpass: bool = False

    @property
    def size(self) -> int:
        return self.P[0] * self.P[1]

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)

    def positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Torus positions of the subband's atoms, shaped like the block."""
        k1, k2 = np.meshgrid(np.arange(self.P[0]), np.arange(self.P[1]), indexing="ij")
        return k1 / self.P[0], k2 / self.P[1]


def _thickness(along: np.ndarray, across: np.ndarray) -> int:
    """Largest extent of ``across`` among points sharing the same ``along`` value."""
    order = np.lexsort((across, along))
    a, c = along[order], across[order]
    starts = np.flatnonzero(np.r_[True, a[1:] != a[:-1]])
    ends = np.r_[starts[1:], a.size] - 1
    return int((c[ends] - c[starts]).max() + 1)


def _fold_shape(k1: np.ndarray, k2: np.ndarray) -> tuple[int, int]:
    """Smallest-area rectangle of two candidates onto which the support folds injectively.

    With ``P1`` at least the full extent of ``k1``, two support points can
    only collide if they share ``k1``; so ``P2`` only needs to exceed the
    largest ``k2``-extent within a single column (and symmetrically with the
    roles swapped). For thin oblique wedges this is far smaller than the
    bounding box.
    """
    ext1 = int(k1.max() - k1.min() + 1)
    ext2 = int(k2.max() - k2.min() + 1)
    a = (sfft.next_fast_len(ext1), sfft.next_fast_len(_thickness(k1, k2)))
    b = (sfft.next_fast_len(_thickness(k2, k1)), sfft.next_fast_len(ext2))
    return a if a[0] * a[1] <= b[0] * b[1] else b


class CurveletFrame:
    """Parseval curvelet frame with a low-pass channel.

    Scales run from ``j0`` to ``log2(N)`` so the radial windows cover every
    grid frequency (the grid corners sit at ``N / sqrt(2) < 2**log2(N)``).
    Scale ``j`` has ``2**ceil(j/2)`` orientations on ``[0, 2 pi)``; angular
    windows are dilated to half-overlap their neighbours.

    Parameters
    ----------
    grid : GridSpec
        Sampling grid.
    j0 : int
        Coarsest curvelet scale; frequencies below ``2**(j0-1)`` go to the
        low-pass channel only.
    scales : iterable of int, optional
        Restrict the frame to these curvelet scales (plus the low-pass channel
        if ``j0 - 1`` is listed). Used to build the part of the frame that can
        see a band-limited field; the restricted system is no longer Parseval
        on the whole grid.
    """

    def __init__(self, grid: GridSpec, j0: int = 2, scales=None):
        if j0 < 1:
            raise ValueError("j0 must be >= 1")
        self.grid = grid
        self.j0 = int(j0)
        self.j_max = grid.p
        if self.j0 > self.j_max:
            raise ValueError(f"j0={j0} exceeds the finest scale {self.j_max} for N={grid.N}")
        wanted = None if scales is None else set(int(j) for j in scales)
        self.wedges: list[Wedge] = []
        if wanted is None or self.j0 - 1 in wanted:
            self.wedges.append(self._lowpass())
        for j in range(self.j0, self.j_max + 1):
            if wanted is not None and j not in wanted:
                continue
            for ell in range(n_orientations(j)):
                self.wedges.append(self._wedge(j, ell))
        offset = 0
        for w in self.wedges:
            w.offset = offset
            offset += w.size
        self.n_coefficients = offset
        self._by_key = {(w.j, w.ell): w for w in self.wedges}

    # -- construction -----------------------------------------------------
    def _lowpass(self) -> Wedge:
        r = self.grid.radius.ravel()
        cut = 2.0 ** (self.j0 - 1)
        support = np.flatnonzero(r < 2 * cut)
        values = np.where(r[support] <= cut, 1.0, radial_window(r[support] / cut))
        keep = values > 0
        return self._make(self.j0 - 1, 0, float("nan"), support[keep], values[keep], lowpass=True)

    def _wedge(self, j: int, ell: int) -> Wedge:
        L = n_orientations(j)
        spacing = 2 * np.pi / L
        theta = spacing * ell
        r = self.grid.radius.ravel()
        band = np.flatnonzero((r > 2.0 ** (j - 1)) & (r < 2.0 ** (j + 1)))
        ang = wrap_angle(self.grid.angle.ravel()[band] - theta)
        values = radial_window(r[band] / 2.0**j) * angular_window(ang, spacing)
        keep = values > 0
        return self._make(j, ell, theta, band[keep], values[keep])

    def _make(self, j, ell, theta, support, values, lowpass=False) -> Wedge:
        k1 = self.grid.kappa[0].ravel()[support]
        k2 = self.grid.kappa[1].ravel()[support]
        P = _fold_shape(k1, k2)
        residues = np.mod(k1, P[0]) * P[1] + np.mod(k2, P[1])
        if np.unique(residues).size != residues.size:
            raise AssertionError(f"fold collision in subband ({j}, {ell})")
        return Wedge(j, ell, theta, support, values, P, residues, lowpass=lowpass)

    # -- lookup -----------------------------------------------------------
    def wedge(self, j: int, ell: int = 0) -> Wedge:
        try:
            return self._by_key[(j, ell)]
        except KeyError:
            raise IndexError(f"no subband (j={j}, ell={ell}) in this frame") from None

    def scale_wedges(self, j: int) -> list[Wedge]:
        return [w for w in self.wedges if w.j == j]

    @property
    def scales(self) -> list[int]:
        return sorted({w.j for w in self.wedges if not w.lowpass})

    def block(self, coeffs: np.ndarray, j: int, ell: int = 0) -> np.ndarray:
        w = self.wedge(j, ell)
        return coeffs[w.slice].reshape(w.P)

    def indices(self) -> Iterator[CurveletIndex]:
        for w in self.wedges:
            for k1 in range(w.P[0]):
                for k2 in range(w.P[1]):
                    yield CurveletIndex(w.j, w.ell, (k1, k2))

    def flat_index(self, eta: CurveletIndex) -> int:
        w = self.wedge(eta.j, eta.ell)
        k1, k2 = eta.k
        if not (0 <= k1 < w.P[0] and 0 <= k2 < w.P[1]):
            raise IndexError(f"translation {eta.k} outside subband lattice {w.P}")
        return w.offset + k1 * w.P[1] + k2

    def index_of(self, flat: int) -> CurveletIndex:
        for w in self.wedges:
            if w.offset <= flat < w.offset + w.size:
                k1, k2 = divmod(flat - w.offset, w.P[1])
                return CurveletIndex(w.j, w.ell, (int(k1), int(k2)))
        raise IndexError(flat)

    # -- atoms and transforms --------------------------------------------
    def atom_spectrum(self, eta: CurveletIndex) -> np.ndarray:
        """Spectrum of one atom: window / sqrt(P1 P2) times its translation phase.

        The factor ``1/sqrt(P1 P2)`` is the lattice normalisation; it scales
        like ``2**(-3j/4)`` for elongated subbands.
        """
        self.flat_index(eta)
        w = self.wedge(eta.j, eta.ell)
        k1 = self.grid.kappa[0].ravel()[w.support]
        k2 = self.grid.kappa[1].ravel()[w.support]
        b1, b2 = eta.k[0] / w.P[0], eta.k[1] / w.P[1]
        out = np.zeros(self.grid.N**2, dtype=complex)
        out[w.support] = w.values / math.sqrt(w.size) * np.exp(-2j * np.pi * (k1 * b1 + k2 * b2))
        return out.reshape(self.grid.shape)

    def atom(self, eta: CurveletIndex) -> np.ndarray:
        return to_field(self.atom_spectrum(eta))

    def analysis_spectrum(self, f_hat: np.ndarray) -> np.ndarray:
        f_flat = self.grid.check(f_hat, "spectrum").ravel()
        out = np.empty(self.n_coefficients, dtype=complex)
        for w in self.wedges:
            tmp = np.zeros(w.size, dtype=complex)
            tmp[w.residues] = f_flat[w.support] * w.values
            out[w.slice] = sfft.ifft2(tmp.reshape(w.P), norm="ortho").ravel()
        return out

    def synthesis_spectrum(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (self.n_coefficients,):
            raise ValueError(f"expected {self.n_coefficients} coefficients, got {coeffs.shape}")
        out = np.zeros(self.grid.N**2, dtype=complex)
        for w in self.wedges:
            blk = sfft.fft2(coeffs[w.slice].reshape(w.P), norm="ortho").ravel()
            out[w.support] += blk[w.residues] * w.values
        return out.reshape(self.grid.shape)

    def analysis(self, f: np.ndarray) -> np.ndarray:
        """Coefficients ``<f, gamma_eta>`` for every atom, as one flat vector."""
        return self.analysis_spectrum(to_spectrum(self.grid.check(f)))

    def synthesis(self, coeffs: np.ndarray) -> np.ndarray:
        return to_field(self.synthesis_spectrum(coeffs))

    def window_energy(self) -> np.ndarray:
        """``sum |window|^2`` at every grid frequency (1 for the full frame)."""
        acc = np.zeros(self.grid.N**2)
        for w in self.wedges:
            acc[w.support] += w.values**2
        return acc.reshape(self.grid.shape)

    @property
    def redundancy(self) -> float:
        return self.n_coefficients / self.grid.N**2


class _Gabor1D:
    """One-dimensional factor of the separable Gabor frame.

    Patch ``n`` covers the frequencies ``s(n-1) .. s(n+1)-1``; ``idx`` maps
    them to FFT-order positions on the axis and ``weight`` holds the window
    (zero for frequencies beyond the grid, whose index is clamped to 0).
    """

    def __init__(self, N: int, s: int, n_max: int | None = None):
        self.N, self.s = N, s
        half = N // 2
        lo, hi = -((half + s - 1) // s), (half - 1 + s - 1) // s
        if n_max is not None:
            lo, hi = max(lo, -n_max), min(hi, n_max)
        self.n = np.arange(lo, hi + 1)
        t = np.arange(2 * s)
        kappa = s * (self.n[:, None] - 1) + t[None, :]
        valid = (kappa >= -half) & (kappa < half)
        self.kappa = kappa
        self.idx = np.where(valid, np.mod(kappa, N), 0)
        self.weight = np.where(valid, bump((t - s) / s)[None, :], 0.0)
        m = np.arange(2 * s)
        self.sign = np.where(((self.n[:, None] - 1) * m[None, :]) % 2 == 0, 1.0, -1.0)
        # the two half-patches each hit every frequency at most once
        self.halves = (np.s_[:, :s], np.s_[:, s:])

    def analysis(self, X: np.ndarray, axis: int) -> np.ndarray:
        """Replace ``axis`` (length N, FFT order) by the two axes ``(n, m)``."""
        shape = [1] * (X.ndim + 1)
        shape[axis], shape[axis + 1] = self.weight.shape
        patches = np.take(X, self.idx, axis=axis) * self.weight.reshape(shape)
        return sfft.ifft(patches, axis=axis + 1, norm="ortho") * self.sign.reshape(shape)

    def synthesis(self, C: np.ndarray, axis: int) -> np.ndarray:
        """Adjoint of :meth:`analysis`: merge axes ``(axis, axis+1)`` into one of length N."""
        shape = [1] * C.ndim
        shape[axis], shape[axis + 1] = self.weight.shape
        patches = sfft.fft(C * self.sign.reshape(shape), axis=axis + 1, norm="ortho")
        patches *= self.weight.reshape(shape)
        out_shape = C.shape[:axis] + (self.N,) + C.shape[axis + 2:]
        out = np.zeros(out_shape, dtype=complex)
        lead = (slice(None),) * axis
        for half in self.halves:
            idx = self.idx[half].ravel()
            vals = patches[lead + half].reshape(C.shape[:axis] + (-1,) + C.shape[axis + 2:])
            keep = self.weight[half].ravel() > 0
            out[lead + (idx[keep],)] += vals[lead + (keep,)]
        return out


class GaborFrame:
    """Separable Gabor Parseval frame with size parameter ``s``.

    Atom ``(m, n)`` has spectrum ``g_hat((kappa - s n)/s) exp(-2 pi i kappa . m/(2s)) / (2s)``
    where ``g_hat`` is a tensor product of bumps supported on ``[-1, 1]``
    whose integer translates square-sum to one. Positions ``m`` live in
    ``{0, ..., 2s-1}^2`` (torus position ``m / (2s)``); modulations ``n``
    cover every band whose window meets the grid.
    Coefficient arrays are laid out as ``[n1, m1, n2, m2]``.
    ``n_max`` keeps only modulations with ``|n_i| <= n_max`` (the atoms that
    can see a band-limited field); the restricted system is Parseval only
    on the frequencies it covers.
    """

    def __init__(self, grid: GridSpec, s: int, n_max: int | None = None):
        s_int = int(round(s))
        if s_int < 1:
            raise ValueError(f"size parameter must be a positive integer, got {s}")
        if 2 * s_int > grid.N:
            raise ValueError(f"s={s_int} is not commensurate with N={grid.N} (need 2s <= N)")
        self.grid = grid
        self.s = s_int
        self._axis = _Gabor1D(grid.N, s_int, n_max)
        nc = self._axis.n.size
        self.shape = (nc, 2 * s_int, nc, 2 * s_int)
        self.n_coefficients = int(np.prod(self.shape))

    @property
    def modulations(self) -> np.ndarray:
        return self._axis.n

    @property
    def window_norm(self) -> float:
        """Norm of the base window; equal to every untruncated atom's norm."""
        return 0.5

    def _n_pos(self, n: int) -> int:
        pos = n - self._axis.n[0]
        if not 0 <= pos < self._axis.n.size:
            raise IndexError(f"modulation {n} outside the frame for N={self.grid.N}, s={self.s}")
        return int(pos)

    def flat_index(self, lam: GaborIndex) -> int:
        m1, m2 = (int(v) % (2 * self.s) for v in lam.m)
        i1, i2 = self._n_pos(lam.n[0]), self._n_pos(lam.n[1])
        return int(np.ravel_multi_index((i1, m1, i2, m2), self.shape))

    def index_of(self, flat: int) -> GaborIndex:
        i1, m1, i2, m2 = np.unravel_index(flat, self.shape)
        n = self._axis.n
        return GaborIndex((int(m1), int(m2)), (int(n[i1]), int(n[i2])))

    def centred_m(self) -> np.ndarray:
        """Position indices reduced to ``[-s, s)``."""
        m = np.arange(2 * self.s)
        return np.where(m >= self.s, m - 2 * self.s, m)

    def atom_spectrum(self, lam: GaborIndex) -> np.ndarray:
        self.flat_index(lam)
        s = self.s
        k1, k2 = self.grid.kappa
        g = bump((k1 - s * lam.n[0]) / s) * bump((k2 - s * lam.n[1]) / s)
        phase = np.exp(-2j * np.pi * (k1 * lam.m[0] + k2 * lam.m[1]) / (2 * s))
        return g * phase / (2 * s)

    def atom(self, lam: GaborIndex) -> np.ndarray:
        return to_field(self.atom_spectrum(lam))

    def analysis_spectrum(self, f_hat: np.ndarray) -> np.ndarray:
        X = self.grid.check(f_hat, "spectrum")
        A = self._axis.analysis(X, 0)  # (n1, m1, N2)
        return self._axis.analysis(A, 2).ravel()  # (n1, m1, n2, m2)

    def synthesis_spectrum(self, coeffs: np.ndarray) -> np.ndarray:
        C = np.asarray(coeffs).reshape(self.shape)
        A = self._axis.synthesis(C, 2)  # (n1, m1, N2)
        return self._axis.synthesis(A, 0)

    def analysis(self, f: np.ndarray) -> np.ndarray:
        return self.analysis_spectrum(to_spectrum(self.grid.check(f)))

    def synthesis(self, coeffs: np.ndarray) -> np.ndarray:
        return to_field(self.synthesis_spectrum(coeffs))

    def window_energy(self) -> np.ndarray:
        w = self._axis
        e1 = np.zeros(self.grid.N)
        np.add.at(e1, w.idx.ravel(), (w.weight**2).ravel())
        return np.outer(e1, e1)

    @property
    def redundancy(self) -> float:
        return self.n_coefficients / self.grid.N**2


def measure_frame_bounds(frame, trials: int = 8, power_iterations: int = 30, seed: int = 0):
    """Estimate the frame bounds ``(A, B)`` of ``frame``.

    Takes the extreme Rayleigh quotients ``||Phi^T f||^2 / ||f||^2`` over
    random unit fields, then sharpens both ends with power iteration on the
    frame operator ``S = Phi Phi^T`` (and on ``B' I - S`` for the lower bound).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    shape = frame.grid.shape

    def frame_op(f):
        return frame.synthesis(frame.analysis(f))

    def quotient(f):
        return float(np.sum(np.abs(frame.analysis(f)) ** 2) / np.mean(np.abs(f) ** 2))

    fields = [rng.standard_normal(shape) + 1j * rng.standard_normal(shape) for _ in range(trials)]
    ratios = [quotient(f) for f in fields]
    A, B = min(ratios), max(ratios)

    f = fields[0]
    for _ in range(power_iterations):
        f = frame_op(f)
        f = f / np.sqrt(np.mean(np.abs(f) ** 2))
    B = max(B, quotient(f))

    shift = B * (1 + 1e-9)
    f = fields[-1]
    for _ in range(power_iterations):
        f = shift * f - frame_op(f)
        f = f / np.sqrt(np.mean(np.abs(f) ** 2))
    A = min(A, quotient(f))
    return A, B


class BandFrame:
    """A frame seen through the orthogonal projection onto a set of frequencies.

    Vectors of this space are the spectral values ``f_hat[support]`` of a
    field whose spectrum vanishes elsewhere; with the package's spectral
    normalisation the Euclidean inner product of these vectors is the torus
    inner product of the fields. ``analysis`` and ``synthesis`` are mutually
    adjoint, and the projected system is Parseval on the band whenever the
    underlying frame is.
    """

    def __init__(self, frame, support: np.ndarray):
        self.frame = frame
        self.grid = frame.grid
        self.support = np.asarray(support)
        k1 = self.grid.kappa[0].ravel()[self.support]
        k2 = self.grid.kappa[1].ravel()[self.support]
        N = self.grid.N
        partner_flat = np.mod(-k1, N) * N + np.mod(-k2, N)
        lookup = np.full(N * N, -1, dtype=np.int64)
        lookup[self.support] = np.arange(self.support.size)
        self.partner = lookup[partner_flat]

    @classmethod
    def from_mask(cls, frame, mask: np.ndarray) -> "BandFrame":
        return cls(frame, np.flatnonzero(np.asarray(mask).ravel()))

    def embed(self, v: np.ndarray) -> np.ndarray:
        """Full spectrum with ``v`` on the band and zeros elsewhere."""
        out = np.zeros(self.grid.N**2, dtype=complex)
        out[self.support] = v
        return out.reshape(self.grid.shape)

    def restrict(self, f_hat: np.ndarray) -> np.ndarray:
        return np.asarray(f_hat).ravel()[self.support]

    def analysis(self, v: np.ndarray) -> np.ndarray:
        return self.frame.analysis_spectrum(self.embed(v))

    def synthesis(self, c: np.ndarray) -> np.ndarray:
        return self.restrict(self.frame.synthesis_spectrum(c))

    def real_projection(self, v: np.ndarray) -> np.ndarray:
        """Project onto spectra of real fields (Hermitian symmetry on the band)."""
        if np.any(self.partner < 0):
            raise ValueError("band is not symmetric under frequency negation")
        return 0.5 * (v + np.conj(v[self.partner]))
