"""Periodic sampling grid on the unit torus and spectral conventions.

A field is an ``(N, N)`` array of samples ``f(i/N, k/N)``; axis 0 runs along
the first coordinate. Its spectrum holds Fourier-series coefficients

    f_hat(kappa) = mean_x f(x) exp(-2 pi i kappa . x)

on the integer frequencies ``kappa`` in ``[-N/2, N/2)^2`` (unshifted FFT
order). With these conventions ``<f, g> = mean(f conj(g)) = sum f_hat conj(g_hat)``,
so every norm reported by the package is the L2 norm on the torus and does not
depend on the sampling resolution.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    """Raised when an array does not live on the expected grid."""


@dataclass(frozen=True)
class GridSpec:
    """Square ``N x N`` grid on the unit torus, ``N = 2**p`` with ``p >= 3``."""

    N: int

    def __post_init__(self):
        N = int(self.N)
        if N < 8 or N & (N - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {self.N}")
        object.__setattr__(self, "N", N)

    @property
    def p(self) -> int:
        return self.N.bit_length() - 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    @cached_property
    def freqs(self) -> np.ndarray:
        """Integer frequency of each FFT bin along one axis."""
        return np.fft.fftfreq(self.N, 1.0 / self.N).astype(np.int64)

    @cached_property
    def kappa(self) -> tuple[np.ndarray, np.ndarray]:
        k1, k2 = np.meshgrid(self.freqs, self.freqs, indexing="ij")
        return k1, k2

    @cached_property
    def radius(self) -> np.ndarray:
        k1, k2 = self.kappa
        return np.hypot(k1, k2)

    @cached_property
    def angle(self) -> np.ndarray:
        """Polar angle of each frequency in ``[0, 2 pi)``."""
        k1, k2 = self.kappa
        return np.mod(np.arctan2(k2, k1), 2 * np.pi)

    @cached_property
    def points(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.N) / self.N
        return tuple(np.meshgrid(x, x, indexing="ij"))

    def check(self, array: np.ndarray, what: str = "field") -> np.ndarray:
        array = np.asarray(array)
        if array.shape != self.shape:
            raise GridMismatchError(f"{what} has shape {array.shape}, expected {self.shape}")
        return array


def to_spectrum(f: np.ndarray) -> np.ndarray:
    return np.fft.fft2(f) / (f.shape[0] * f.shape[1])


def to_field(f_hat: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(f_hat) * (f_hat.shape[0] * f_hat.shape[1])


def inner(f: np.ndarray, g: np.ndarray) -> complex:
    """Torus inner product ``<f, g>`` of two sampled fields."""
    return complex(np.mean(f * np.conj(g)))


def norm(f: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(f) ** 2)))
