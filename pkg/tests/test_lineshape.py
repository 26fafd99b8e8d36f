import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from masersense.errors import DomainError
from masersense.lineshape import (
    LorentzianProfile,
    closed_form_fwhm,
    default_grid,
    half_max_count,
    map_to_photons,
    measure_fwhm,
    measure_hwhm_high,
    measure_hwhm_low,
    narrowing_report,
    sample_profile,
)
from masersense.maser_dynamics import TYPICAL_RATES, steady_state_photons, threshold_inversion
from masersense.spectrum import Spectrum, ValueKind, uniform_grid
from oracles import mp_half_max_fwhm

N_TH = threshold_inversion(TYPICAL_RATES)


def test_profile_invariants():
    with pytest.raises(DomainError):
        LorentzianProfile(-1.0, 0.0, 4.0)
    with pytest.raises(DomainError):
        LorentzianProfile(1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        LorentzianProfile(1.0, float("nan"), 1.0)


def test_sample_profile_examples():
    grid = uniform_grid(0.0, 12.0, 2401)
    s = sample_profile(LorentzianProfile(1.0, 0.0, 4.0), grid)
    i = np.searchsorted(grid, [-2.0, 2.0])
    assert s.values[i[0]] == pytest.approx(0.5, abs=1e-15)
    assert s.values[i[1]] == pytest.approx(0.5, abs=1e-15)

    p = LorentzianProfile(6e12, 1450.0, 4.0)
    g = default_grid(p)
    s = sample_profile(p, g)
    assert s.values[np.searchsorted(g, 1450.0)] == 6e12
    assert s.value_kind is ValueKind.PHOTON_COUNT

    zero = sample_profile(LorentzianProfile(0.0, 1450.0, 4.0), g)
    assert np.all(zero.values == 0)


def test_sample_profile_requires_support():
    with pytest.raises(DomainError, match="cover"):
        sample_profile(LorentzianProfile(1.0, 0.0, 4.0), uniform_grid(0.0, 8.0))


def test_default_grid():
    g = default_grid(LorentzianProfile(1.0, 1450.0, 1.0))
    assert len(g) == 1601 and g[0] == pytest.approx(1442.0) and g[-1] == pytest.approx(1458.0)
    assert g[800] == 1450.0
    wide = default_grid(LorentzianProfile(1.0, 1450.0, 4.0))
    assert wide[0] <= 1450.0 - 12.0 and wide[-1] >= 1450.0 + 12.0


def test_map_to_photons():
    g = default_grid(LorentzianProfile(1.0, 1450.0, 4.0))
    zero = map_to_photons(Spectrum(g, np.zeros_like(g), ValueKind.PHOTON_COUNT), TYPICAL_RATES)
    assert np.all(zero.values == 0)
    s = sample_profile(LorentzianProfile(6e12, 1450.0, 4.0), g)
    out = map_to_photons(s, TYPICAL_RATES)
    np.testing.assert_array_equal(out.frequencies, s.frequencies)
    np.testing.assert_allclose(out.values, steady_state_photons(TYPICAL_RATES, s.values), rtol=0)
    assert out.value_kind is ValueKind.PHOTON_COUNT


def test_map_reports_first_frequency_over_threshold():
    g = default_grid(LorentzianProfile(1.0, 1450.0, 4.0))
    s = sample_profile(LorentzianProfile(1.2 * N_TH, 1450.0, 4.0), g)
    with pytest.raises(DomainError, match=r"MHz reaches the masing threshold") as info:
        map_to_photons(s, TYPICAL_RATES)
    first = g[np.argmax(s.values >= N_TH * (1 - 1e-9))]
    assert f"{first:.6f}" in str(info.value)


@pytest.mark.parametrize("N_max,expected", [(6e12, 0.956183), (2e11, 3.93664)])
def test_closed_form_fwhm(N_max, expected):
    p = LorentzianProfile(N_max, 0.0, 4.0)
    got = closed_form_fwhm(p, TYPICAL_RATES)
    assert got == pytest.approx(expected, rel=1e-5)
    assert got == pytest.approx(float(mp_half_max_fwhm(N_max, 4.0)), rel=1e-12)


def test_closed_form_limits_and_errors():
    assert closed_form_fwhm(LorentzianProfile(0.0, 0.0, 4.0), TYPICAL_RATES) == 4.0
    assert closed_form_fwhm(LorentzianProfile(1e-6 * N_TH, 0.0, 4.0), TYPICAL_RATES) == pytest.approx(4.0, rel=1e-6)
    with pytest.raises(DomainError):
        closed_form_fwhm(LorentzianProfile(N_TH, 0.0, 4.0), TYPICAL_RATES)
    with pytest.raises(DomainError):
        half_max_count(LorentzianProfile(N_TH, 0.0, 4.0), TYPICAL_RATES)


def test_half_max_count_halves_photons():
    p = LorentzianProfile(6e12, 0.0, 4.0)
    Nh = half_max_count(p, TYPICAL_RATES)
    assert steady_state_photons(TYPICAL_RATES, Nh) == pytest.approx(steady_state_photons(TYPICAL_RATES, 6e12) / 2, rel=1e-14)


def test_measure_unit_lorentzian():
    grid = np.arange(-20.0, 20.0 + 1e-9, 0.01)
    s = sample_profile(LorentzianProfile(1.0, 0.0, 4.0), grid)
    assert measure_fwhm(s) == pytest.approx(4.0, abs=0.01)
    assert measure_hwhm_low(s) == pytest.approx(2.0, abs=0.01)
    assert measure_hwhm_high(s) == pytest.approx(2.0, abs=0.01)


def test_measure_split_half_lorentzians():
    f = np.linspace(-10, 10, 20001)
    w = np.where(f < 0, 0.5, 1.5)
    s = Spectrum(f, 1 / (1 + (f / w) ** 2))
    assert measure_fwhm(s) == pytest.approx(2.0, abs=1e-6)
    assert measure_hwhm_low(s) == pytest.approx(0.5, abs=1e-6)
    assert measure_hwhm_high(s) == pytest.approx(1.5, abs=1e-6)


def test_measure_errors():
    f = np.linspace(0, 1, 11)
    with pytest.raises(DomainError, match="edge"):
        measure_fwhm(Spectrum(f, f))
    with pytest.raises(DomainError, match="outside"):
        measure_fwhm(Spectrum(f, 1 + 0.1 * np.sin(np.pi * f)))
    with pytest.raises(DomainError, match="unique"):
        measure_fwhm(Spectrum(f, np.array([0, 0, 1, 2, 0, 0, 0, 2, 1, 0, 0], dtype=float)))
    with pytest.raises(DomainError, match="positive"):
        measure_fwhm(Spectrum(f, -np.abs(f - 0.5), ValueKind.LOG_AMPLITUDE_DB))


def test_measured_narrowing_matches_closed_form():
    p = LorentzianProfile(6e12, 1450.0, 4.0)
    g = default_grid(p)
    out = map_to_photons(sample_profile(p, g), TYPICAL_RATES)
    assert abs(measure_fwhm(out) - closed_form_fwhm(p, TYPICAL_RATES)) <= g[1] - g[0]


@given(st.floats(1e9, 0.99 * N_TH), st.floats(0.5, 10.0))
def test_measured_fwhm_within_one_grid_step(N_max, fwhm):
    p = LorentzianProfile(N_max, 1450.0, fwhm)
    g = default_grid(p)
    out = map_to_photons(sample_profile(p, g), TYPICAL_RATES)
    assert abs(measure_fwhm(out) - closed_form_fwhm(p, TYPICAL_RATES)) <= g[1] - g[0]


@given(st.floats(1e9, 0.99 * N_TH), st.floats(0.5, 10.0), st.floats(-3.0, 3.0))
def test_map_preserves_argmax_and_non_negativity(N_max, fwhm, offset):
    p = LorentzianProfile(N_max, 1450.0 + offset * 1e-3, fwhm)
    g = uniform_grid(1450.0, 3.5 * fwhm, 1601)
    s = sample_profile(p, g)
    out = map_to_photons(s, TYPICAL_RATES)
    assert np.argmax(out.values) == np.argmax(s.values)
    assert np.all(out.values >= 0)


def test_narrowing_is_monotone():
    fracs = np.linspace(0.01, 0.99, 40)
    closed = [closed_form_fwhm(LorentzianProfile(f * N_TH, 0.0, 4.0), TYPICAL_RATES) for f in fracs]
    assert np.all(np.diff(closed) < 0)
    g = default_grid(LorentzianProfile(1.0, 1450.0, 4.0))
    measured = [measure_fwhm(map_to_photons(sample_profile(LorentzianProfile(f * N_TH, 1450.0, 4.0), g),
                                            TYPICAL_RATES)) for f in fracs]
    assert np.all(np.diff(measured) < 0)


def test_small_inversion_keeps_intrinsic_width():
    p = LorentzianProfile(1e-6 * N_TH, 1450.0, 4.0)
    g = default_grid(p)
    out = map_to_photons(sample_profile(p, g), TYPICAL_RATES)
    assert measure_fwhm(out) == pytest.approx(4.0, rel=1e-3)


def test_narrowing_report_below_and_above_threshold():
    below = LorentzianProfile(2e11, 1450.0, 4.0)
    above = LorentzianProfile(6e12, 1450.0, 4.0)
    r = narrowing_report(below, above, TYPICAL_RATES, default_grid(above))
    assert r.amplitude_ratio == pytest.approx(508.5, rel=1e-6)
    assert r.peak_gain_ratio == pytest.approx(16.95, rel=1e-6)
    assert r.fwhm_in == pytest.approx(4.0, abs=1e-3)
    assert r.fwhm_out == pytest.approx(0.9562, abs=1e-3)
    assert r.fwhm_out_below == pytest.approx(3.9366, abs=1e-3)
    assert r.hwhm_low_out == pytest.approx(r.fwhm_out / 2, rel=1e-6)
    assert all(v > 0 for v in r.to_dict().values())


def test_narrowing_report_identical_and_subthreshold():
    p = LorentzianProfile(2e11, 1450.0, 4.0)
    g = default_grid(p)
    r = narrowing_report(p, p, TYPICAL_RATES, g)
    assert r.amplitude_ratio == 1.0 and r.peak_gain_ratio == 1.0
    r2 = narrowing_report(p, LorentzianProfile(4e11, 1450.0, 4.0), TYPICAL_RATES, g)
    assert r2.amplitude_ratio == pytest.approx(2.0671, rel=1e-4)
    with pytest.raises(DomainError):
        narrowing_report(LorentzianProfile(0.0, 1450.0, 4.0), p, TYPICAL_RATES, g)
