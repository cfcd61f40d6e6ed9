import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coftherm.constants import KCAL_MOL_FS_TO_W
from coftherm.nemd import (
    FitError,
    average_kappa,
    extract_kappa,
    fit_halves,
    heat_rate,
    linear_fit,
    parity_r2,
    stability_filter,
)
from coftherm.structio import BinProfile

# CODATA / SI exact values
N_A = 6.02214076e23
J_PER_KCAL = 4184.0
S_PER_FS = 1e-15


def test_conversion_constant_from_codata():
    derived = J_PER_KCAL / N_A / S_PER_FS
    assert derived == pytest.approx(6.9477e-6, rel=1e-4)
    assert KCAL_MOL_FS_TO_W == pytest.approx(derived, rel=1e-15)


def hand_profile(kappa=1.0, n=100, length=70.0, width=20.0, thickness=3.4, grad=0.5, offset=280.0, left=None):
    """Profile built from Fourier's law by hand: sinks at 0 and n-1, sources at n/2-1 and n/2."""
    w = length / n
    x = (np.arange(n) + 0.5) * w
    gl = grad if left is None else left
    gr = 2 * grad - gl
    temps = np.where(x < length / 2, offset + gl * (x - x[0]), offset + gr * (x[-1] - x))
    area_m2 = width * thickness * 1e-20
    watts = kappa * area_m2 * (grad * 1e10)
    dE_dt = watts / (J_PER_KCAL / N_A / S_PER_FS)
    return BinProfile(temps, (n // 2 - 1, n // 2), (0, n - 1), dE_dt, w, width * thickness)


@pytest.mark.parametrize(
    "n, k, expected",
    [(10000, 1e-7, 1e-3), (2471, 1e-7, 2.471e-4), (1, 0.0, 0.0)],
)
def test_heat_rate(n, k, expected):
    assert heat_rate(n, k) == pytest.approx(expected, rel=1e-12, abs=0)


def test_heat_rate_zero_warns(caplog):
    with caplog.at_level(logging.WARNING):
        heat_rate(1, 0.0)
    assert "zero" in caplog.text


def test_synthetic_profile_recovers_unit_kappa():
    res = extract_kappa(hand_profile())
    assert res.kappa == pytest.approx(1.0, abs=1e-3)
    assert res.fit_r2_left == pytest.approx(1.0, abs=1e-12)
    assert res.fit_r2_right == pytest.approx(1.0, abs=1e-12)
    assert res.dE_dt_watts == pytest.approx(3.4e-9, rel=1e-12)


def test_asymmetric_halves_use_mean_abs_slope():
    res = extract_kappa(hand_profile(left=0.7))
    assert abs(res.slope_left) == pytest.approx(0.7, rel=1e-12)
    assert abs(res.slope_right) == pytest.approx(0.3, rel=1e-12)
    assert res.kappa == pytest.approx(1.0, rel=1e-9)


def test_symmetric_slopes():
    left, right = fit_halves(hand_profile(grad=0.25))
    assert abs(left.slope) == pytest.approx(0.25, rel=1e-12)
    assert abs(right.slope) == pytest.approx(0.25, rel=1e-12)
    assert left.slope > 0 > right.slope


def test_doubled_cross_section_halves_kappa():
    p = hand_profile()
    doubled = BinProfile(p.temperatures, p.source_bins, p.sink_bins, p.dE_dt, p.bin_width, 2 * p.cross_section)
    assert extract_kappa(doubled).kappa == pytest.approx(0.5 * extract_kappa(p).kappa, rel=1e-12)


def test_heat_rate_sweep_linear():
    p = hand_profile()
    base = extract_kappa(p).kappa
    for f in np.linspace(0.5, 5.0, 10):
        q = BinProfile(p.temperatures, p.source_bins, p.sink_bins, f * p.dE_dt, p.bin_width, p.cross_section)
        assert extract_kappa(q).kappa == pytest.approx(f * base, rel=1e-12)


def test_inverse_area_sweep_linear():
    p = hand_profile()
    base = extract_kappa(p).kappa
    for f in np.linspace(0.5, 5.0, 10):
        q = BinProfile(p.temperatures, p.source_bins, p.sink_bins, p.dE_dt, p.bin_width, f * p.cross_section)
        assert extract_kappa(q).kappa == pytest.approx(base / f, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-250.0, 1000.0))
def test_offset_invariance(c):
    p = hand_profile()
    q = BinProfile(p.temperatures + c, p.source_bins, p.sink_bins, p.dE_dt, p.bin_width, p.cross_section)
    assert extract_kappa(q).kappa == pytest.approx(extract_kappa(p).kappa, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(0.01, 2.0))
def test_recovers_any_kappa(kappa, grad):
    assert extract_kappa(hand_profile(kappa=kappa, grad=grad)).kappa == pytest.approx(kappa, rel=1e-9)


def test_sources_excluded_from_fit():
    p = hand_profile()
    temps = p.temperatures.copy()
    temps[list(p.source_bins)] = 1000.0
    temps[list(p.sink_bins)] = 1.0
    q = BinProfile(temps, p.source_bins, p.sink_bins, p.dE_dt, p.bin_width, p.cross_section)
    assert extract_kappa(q).kappa == pytest.approx(1.0, rel=1e-9)


def test_wrapping_half_is_unwrapped():
    # sources in the middle of the box, sink at bin 10: one half wraps through the boundary
    n, w = 40, 1.0
    x = (np.arange(n) + 0.5) * w
    src, sink = (29, 30), (10,)
    # distance from the sink along the periodic axis
    d = np.minimum(np.abs(x - x[10]), n * w - np.abs(x - x[10]))
    temps = 300 + 0.5 * d
    p = BinProfile(temps, src, sink, 1e-4, w, 50.0)
    left, right = fit_halves(p)
    assert sorted([abs(left.slope), abs(right.slope)]) == pytest.approx([0.5, 0.5], rel=1e-12)


def test_trim_drops_bins():
    p = hand_profile()
    assert fit_halves(p, trim=3)[0].n == fit_halves(p)[0].n - 6
    with pytest.raises(FitError, match="bins left"):
        fit_halves(p, trim=30)


def test_too_few_points():
    temps = np.full(6, 300.0) + np.arange(6)
    p = BinProfile(temps, (3,), (0,), 1e-4, 1.0, 10.0)
    with pytest.raises(FitError, match="need 3"):
        extract_kappa(p)


def test_flat_profile_infinite_kappa():
    p = BinProfile(np.full(100, 300.0), (49, 50), (0, 99), 1e-4, 0.7, 68.0)
    with pytest.raises(FitError, match="infinite"):
        extract_kappa(p)


def test_linear_fit_exact():
    f = linear_fit([0, 1, 2, 3], [1, 3, 5, 7])
    assert (f.slope, f.intercept, f.r2) == (2.0, 1.0, 1.0)


@pytest.mark.parametrize("kx, ky, mean, ratio", [(2, 2, 2, 1), (4.0, 2.0, 3.0, 2.0)])
def test_average_kappa(kx, ky, mean, ratio):
    assert average_kappa(kx, ky) == (mean, ratio)


def test_parity_r2_near_one():
    rng = np.random.default_rng(3)
    kx = rng.lognormal(0, 0.8, 500)
    ky = kx * (1 + 0.02 * rng.standard_normal(500))
    assert parity_r2(kx, ky) > 0.99
    assert parity_r2(kx, kx) == 1.0


@pytest.mark.parametrize("l0, l1, ok", [(70, 70, True), (70, 62, False), (70, 63.1, True)])
def test_stability_filter(l0, l1, ok):
    assert stability_filter(l0, l1) is ok


def test_stability_hand_ratios():
    assert abs(62 - 70) / 70 == pytest.approx(0.1143, abs=1e-4)
    assert abs(63.1 - 70) / 70 == pytest.approx(0.0986, abs=1e-4)
