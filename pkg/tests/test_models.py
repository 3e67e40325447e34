import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cartex.frames import CurveletFrame, GaborFrame, GaborIndex
from cartex.grid import GridSpec
from cartex.models import (AnnulusSpec, BumpProfile, CartoonSpec, TextureSpec, build_cartoon,
                           build_texture, energy_match_closed_form, energy_match_numeric,
                           fourier_decay_exponent, texture_band_norm, texture_coefficient,
                           texture_coefficients, texture_total_norm, winding_number)


# -- cartoon -----------------------------------------------------------------

def test_disk_indicator_values():
    g = GridSpec(128)
    c = build_cartoon(CartoonSpec.disk(0.25), g)
    assert set(np.unique(c.field)) == {0.0, 1.0}
    x1, x2 = g.points
    inside = (x1 - 0.5) ** 2 + (x2 - 0.5) ** 2 < 0.25**2 - 1e-3
    outside = (x1 - 0.5) ** 2 + (x2 - 0.5) ** 2 > 0.25**2 + 1e-3
    assert np.all(c.field[inside] == 1) and np.all(c.field[outside] == 0)


def test_membership_matches_analytic_ellipse():
    """Winding-number membership agrees with the implicit ellipse inequality."""
    spec = CartoonSpec(center=(0.45, 0.55), semi_axes=(0.3, 0.15), rotation=0.7,
                       f0=BumpProfile(0.25), f1=BumpProfile(1.5), boundary_samples=8192)
    g = GridSpec(128)
    c = build_cartoon(spec, g)
    x1, x2 = g.points
    u1, u2 = x1 - 0.45, x2 - 0.55
    cr, sr = math.cos(0.7), math.sin(0.7)
    a = (cr * u1 + sr * u2) / 0.3
    b = (-sr * u1 + cr * u2) / 0.15
    q = a**2 + b**2
    clear = np.abs(q - 1) > 1e-3
    assert np.all((c.field[clear] == 1.75) == (q[clear] < 1))
    assert np.all(c.field[clear & (q > 1)] == 0.25)


def test_boundary_samples_and_tangents():
    spec = CartoonSpec()
    pts, tan = spec.boundary(512)
    assert pts.shape == tan.shape == (512, 2)
    assert np.allclose(np.linalg.norm(tan, axis=1), 1)
    chord = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    chord /= np.linalg.norm(chord, axis=1, keepdims=True)
    assert np.all(np.sum(chord * tan, axis=1) > 0.999)


def test_winding_number_square():
    sq = np.array([[0.2, 0.2], [0.8, 0.2], [0.8, 0.8], [0.2, 0.8]])
    pts = np.array([[0.5, 0.5], [0.1, 0.5], [0.5, 0.9], [0.79, 0.21]])
    assert list(winding_number(pts, sq)) == [1, 0, 0, 1]


def test_cartoon_validation():
    with pytest.raises(ValueError):
        CartoonSpec(center=(0.1, 0.5)).validate()  # leaves the domain
    with pytest.raises(ValueError):
        CartoonSpec(harmonics=((3, 0.6, 0.0),)).validate()  # not convex
    CartoonSpec(harmonics=((3, 0.02, 0.01),)).validate()


def test_profile_is_compactly_supported():
    p = BumpProfile(2.0, 0.1)
    d2 = np.array([0.0, 0.005, 0.011, 0.02])
    assert p(d2)[0] == 2.0 and p(d2)[-1] == 0.0 and p(d2)[-2] == 0.0


def test_decay_exponent_disk():
    c = build_cartoon(CartoonSpec.disk(0.25), GridSpec(1024))
    assert fourier_decay_exponent(c.field) == pytest.approx(-1.5, abs=0.15)


def test_decay_exponent_ellipse():
    c = build_cartoon(CartoonSpec(), GridSpec(1024))
    assert fourier_decay_exponent(c.field) == pytest.approx(-1.5, abs=0.2)


def test_decay_exponent_smooth_cartoon():
    spec = CartoonSpec(f0=BumpProfile(1.0, 0.3), f1=BumpProfile(0.0))
    c = build_cartoon(spec, GridSpec(512))
    assert fourier_decay_exponent(c.field) <= -3


def test_smooth_cartoon_curvelet_energy_collapses_across_scales():
    g = GridSpec(256)
    smooth = build_cartoon(CartoonSpec(f0=BumpProfile(1.0, 0.3), f1=BumpProfile(0.0)), g).field
    edge = build_cartoon(CartoonSpec(), g).field
    curv = CurveletFrame(g)

    def scale_energy(f, j):
        c = curv.analysis(f)
        return sum(np.sum(np.abs(c[w.slice]) ** 2) for w in curv.scale_wedges(j))

    ratio_smooth = scale_energy(smooth, 6) / scale_energy(smooth, 3)
    ratio_edge = scale_energy(edge, 6) / scale_energy(edge, 3)
    assert ratio_smooth < 1e-3 * ratio_edge


def test_decay_exponent_rejects_zero():
    with pytest.raises(ValueError):
        fourier_decay_exponent(np.zeros((64, 64)))


# -- texture -------------------------------------------------------------------

def test_coefficient_magnitudes():
    spec = TextureSpec(delta=2.0)
    assert abs(texture_coefficient(spec, (0, 0), (0, 0))) == pytest.approx(1.0)
    assert abs(texture_coefficient(spec, (2, 0), (1, 0))) == pytest.approx(2.0**-4)
    assert abs(texture_coefficient(spec, (0, 2), (0, -1))) == pytest.approx(2.0**-4)


@given(st.integers(-20, 20), st.integers(-20, 20), st.integers(-5, 5), st.integers(-5, 5),
       st.integers(0, 1000))
def test_coefficient_symmetries(m1, m2, n1, n2, seed):
    spec = TextureSpec(delta=1.5, seed=seed)
    d = texture_coefficient(spec, (m1, m2), (n1, n2))
    assert abs(texture_coefficient(spec, (-m1, -m2), (n1, n2))) == pytest.approx(abs(d))
    assert texture_coefficient(spec, (m1, m2), (-n1, -n2)) == pytest.approx(np.conj(d))


def test_single_coefficient_gives_the_atom():
    g = GridSpec(64)
    spec = TextureSpec(s=4)
    d = np.zeros_like(texture_coefficients(spec, 64))
    Rm = (d.shape[0] - 1) // 2
    Rn = (d.shape[2] - 1) // 2
    d[Rm, Rm, Rn, Rn] = 1.0
    T = build_texture(spec, g, d)
    atom = GaborFrame(g, 4).atom(GaborIndex((0, 0), (0, 0)))
    assert np.allclose(T, atom, atol=1e-14)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_texture_is_linear(a, b):
    g = GridSpec(64)
    spec = TextureSpec(s=4)
    d1 = texture_coefficients(spec, 64)
    d2 = texture_coefficients(TextureSpec(s=4, seed=7), 64)
    lhs = build_texture(spec, g, a * d1 + b * d2)
    rhs = a * build_texture(spec, g, d1) + b * build_texture(spec, g, d2)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_random_phase_texture_is_real():
    T = build_texture(TextureSpec(s=8, seed=3), GridSpec(128))
    assert np.isrealobj(T)


def test_texture_rejects_nyquist_overflow():
    with pytest.raises(ValueError):
        build_texture(TextureSpec(s=8, freq_radius=8), GridSpec(64))


def test_total_expression_tracks_direct_energy():
    """Summed over every modulation the band expression is within a factor 2 of ||T_s||^2."""
    g = GridSpec(256)
    for s in (8, 16):
        spec = TextureSpec(delta=2.0, s=s)
        direct = float(np.mean(build_texture(spec, g) ** 2))
        assert 0.5 <= texture_total_norm(spec, 256) / direct <= 2.0


def test_band_norm_single_shell():
    # only m = 0 survives the truncation and the annulus holds the four |n| = 1 points
    spec = TextureSpec(delta=2.0, s=4, amplitude=3.0, spatial_factor=0.2)
    assert AnnulusSpec(1, 4).points().shape[0] == 4
    assert texture_band_norm(spec, 4, 1, window_energy=1.0) == pytest.approx(4 * 9.0)


def test_band_norm_empty_annulus():
    assert AnnulusSpec(0, 100).points().size == 0
    assert texture_band_norm(TextureSpec(), 100, 0) == 0.0


def test_annulus_radii():
    a = AnnulusSpec(5, 4)
    assert a.inner == 4.0 and a.outer == 16.0 and a.inner < a.outer


# -- energy matching -----------------------------------------------------------

def test_closed_form_matching():
    assert energy_match_closed_form(6, 2.0) == 32
    assert energy_match_closed_form(0, 2.0) == 1
    assert energy_match_closed_form(4, 1.0) == 8
    with pytest.raises(ValueError):
        energy_match_closed_form(3, 0.0)


def test_numeric_matching_zero_texture():
    with pytest.raises(ValueError):
        energy_match_numeric(4, TextureSpec(amplitude=0.0))


def test_numeric_matching_moves_with_amplitude():
    base = energy_match_numeric(5, TextureSpec(2.0, 1, 1.0, "positive"))
    louder = energy_match_numeric(5, TextureSpec(2.0, 1, 2.0, "positive"))
    assert louder < base  # a stronger texture needs an annulus further out


@pytest.mark.xfail(strict=True, reason="unit-constant lattice sum matches far below the "
                   "closed-form size at desk scale; see the decision ledger")
def test_numeric_matching_near_closed_form():
    s = energy_match_numeric(6, TextureSpec(2.0, 1, 1.0, "positive"))
    assert 16 <= s <= 64
