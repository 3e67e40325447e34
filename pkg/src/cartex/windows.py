"""Smooth window profiles with exact squared partitions of unity."""
from __future__ import annotations

import numpy as np


def smoothstep(t):
    """Polynomial transition 0 -> 1 on [0, 1] with ``nu(t) + nu(1 - t) = 1``.

    ``nu(t) = t^4 (35 - 84 t + 70 t^2 - 20 t^3)``, clipped outside [0, 1].
    The upper half is evaluated as ``1 - nu(1 - t)`` so the symmetry holds to
    rounding and the value never exceeds 1.
    """
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    u = np.minimum(t, 1.0 - t)
    low = u**4 * (35.0 - 84.0 * u + 70.0 * u**2 - 20.0 * u**3)
    return np.where(t <= 0.5, low, 1.0 - low)


def bump(t):
    """Symmetric bump on [-1, 1] with ``bump(t)**2 + bump(t - 1)**2 = 1`` on [0, 1]."""
    t = np.abs(np.asarray(t, dtype=float))
    out = np.cos(0.5 * np.pi * smoothstep(t))
    return np.where(t < 1.0, out, 0.0)


def radial_window(t):
    """Radial profile W supported on [1/2, 2] with ``sum_j W(2^-j t)^2 = 1``.

    Built on a logarithmic axis, so ``W(t)^2 + W(t/2)^2 = 1`` for t in [1, 2].
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0.5) & (t < 2.0)
    out[inside] = bump(np.log2(t[inside]))
    return out if out.ndim else float(out)


def angular_window(u, spacing: float = 1.0):
    """Angular profile V dilated so translates by ``spacing`` square-sum to 1.

    Supported on ``(-spacing, spacing)``; adjacent translates half-overlap.
    """
    out = bump(np.asarray(u, dtype=float) / spacing)
    return out if out.ndim else float(out)


def wrap_angle(u):
    """Reduce angles to ``[-pi, pi)``."""
    return np.mod(np.asarray(u) + np.pi, 2 * np.pi) - np.pi
