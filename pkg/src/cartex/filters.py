"""Radial subband filter bank ``F_j`` with an exact squared partition of unity."""
from __future__ import annotations

import numpy as np

from .grid import GridSpec, to_field, to_spectrum
from .windows import radial_window


class FilterBank:
    """Filters ``F_hat_j(xi) = W(|xi| / 2**j)`` for ``j0 <= j <= log2(N)`` plus a low-pass.

    The low-pass transfer is 1 below ``2**(j0-1)`` and ``W(|xi| / 2**(j0-1))``
    above, so ``sum_j F_hat_j**2 + lowpass**2 == 1`` at every grid frequency.
    The same split is used by the curvelet frame, so ``F_j`` only sees the
    curvelets of scales ``j-1 .. j+1``.
    """

    def __init__(self, grid: GridSpec, j0: int = 2):
        if not 1 <= j0 <= grid.p:
            raise ValueError(f"j0={j0} outside [1, {grid.p}] for N={grid.N}")
        self.grid = grid
        self.j0 = int(j0)
        self.j_max = grid.p
        r = grid.radius
        cut = 2.0 ** (self.j0 - 1)
        self._lowpass = np.where(r <= cut, 1.0, radial_window(np.maximum(r, cut) / cut))
        self._bands = {j: radial_window(r / 2.0**j) for j in self.scales}

    @property
    def scales(self) -> list[int]:
        return list(range(self.j0, self.j_max + 1))

    def bandpass_spectrum(self, j: int) -> np.ndarray:
        """Transfer function ``F_hat_j`` on the grid (unshifted FFT order)."""
        if j not in self._bands:
            raise IndexError(f"scale {j} outside [{self.j0}, {self.j_max}]")
        return self._bands[j]

    def lowpass_spectrum(self) -> np.ndarray:
        return self._lowpass

    def _transfers(self) -> list[np.ndarray]:
        return [self._bands[j] for j in self.scales] + [self._lowpass]

    def filter(self, f: np.ndarray, j: int) -> np.ndarray:
        """The subband piece ``F_j * f``."""
        out = to_field(to_spectrum(self.grid.check(f)) * self.bandpass_spectrum(j))
        return out.real if np.isrealobj(f) else out

    def decompose(self, f: np.ndarray) -> list[np.ndarray]:
        """Pieces ``[f_j0, ..., f_jmax, lowpass]`` with ``f_j = F_j * f``."""
        f = self.grid.check(f)
        f_hat = to_spectrum(f)
        pieces = [to_field(f_hat * h) for h in self._transfers()]
        return [p.real for p in pieces] if np.isrealobj(f) else pieces

    def reconstruct(self, pieces) -> np.ndarray:
        """Invert :meth:`decompose`: ``f = sum_j F_j * f_j + lowpass * lp``."""
        pieces = list(pieces)
        transfers = self._transfers()
        if len(pieces) != len(transfers):
            raise ValueError(f"expected {len(transfers)} pieces, got {len(pieces)}")
        acc = np.zeros(self.grid.shape, dtype=complex)
        for piece, h in zip(pieces, transfers):
            acc += to_spectrum(self.grid.check(piece)) * h
        out = to_field(acc)
        return out.real if all(np.isrealobj(p) for p in pieces) else out

    def partition(self) -> np.ndarray:
        """``sum_j F_hat_j**2 + lowpass**2`` at every grid frequency."""
        return sum(h**2 for h in self._transfers())
