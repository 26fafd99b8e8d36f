"""Masing-narrowed lineshapes of an inhomogeneously broadened spin ensemble.

An inversion profile N(omega) is pushed point by point through the
steady-state photon map; above threshold the strongly non-linear map
compresses the line around its centre.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError
from .maser_dynamics import RateConstants, steady_state_photons, threshold_inversion, THRESHOLD_GUARD
from .spectrum import Spectrum, ValueKind, uniform_grid

#: Support window required around the profile centre, in units of FWHM.
SUPPORT_FWHMS = 3.0


@dataclass(frozen=True)
class LorentzianProfile:
    N_max: float
    center: float
    fwhm: float

    def __post_init__(self):
        if not (self.N_max >= 0 and math.isfinite(self.N_max)):
            raise DomainError(f"N_max must be non-negative, got {self.N_max!r}")
        if not (self.fwhm > 0 and math.isfinite(self.fwhm)):
            raise DomainError(f"fwhm must be positive, got {self.fwhm!r}")
        if not math.isfinite(self.center):
            raise DomainError("center must be finite")


@dataclass(frozen=True)
class NarrowingReport:
    fwhm_in: float
    fwhm_out: float
    hwhm_low_in: float
    hwhm_low_out: float
    fwhm_out_below: float
    amplitude_ratio: float
    peak_gain_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def default_grid(profile: LorentzianProfile, n_points: int = 1601) -> np.ndarray:
    """1601-point grid spanning centre +- max(8 MHz, 3 FWHM)."""
    return uniform_grid(profile.center, max(8.0, SUPPORT_FWHMS * profile.fwhm), n_points)


def sample_profile(profile: LorentzianProfile, grid) -> Spectrum:
    grid = np.asarray(grid, dtype=float)
    lo = profile.center - SUPPORT_FWHMS * profile.fwhm
    hi = profile.center + SUPPORT_FWHMS * profile.fwhm
    if grid.ndim != 1 or len(grid) < 3 or grid[0] > lo or grid[-1] < hi:
        raise DomainError(
            f"grid must cover [{lo:.6g}, {hi:.6g}] MHz (centre +- {SUPPORT_FWHMS:g} FWHM)"
        )
    x = 2.0 * (grid - profile.center) / profile.fwhm
    return Spectrum(grid, profile.N_max / (1.0 + x * x), ValueKind.PHOTON_COUNT)


def map_to_photons(spectrum: Spectrum, params: RateConstants) -> Spectrum:
    """Apply the steady-state photon map to every sample of an inversion spectrum."""
    limit = threshold_inversion(params) * (1.0 - THRESHOLD_GUARD)
    over = np.nonzero(spectrum.values >= limit)[0]
    if len(over):
        i = over[0]
        raise DomainError(
            f"N={spectrum.values[i]:.6g} at {spectrum.frequencies[i]:.6f} MHz reaches the "
            f"masing threshold {threshold_inversion(params):.6g}"
        )
    n = steady_state_photons(params, spectrum.values)
    return Spectrum(spectrum.frequencies, np.atleast_1d(n), ValueKind.PHOTON_COUNT)


def half_max_count(profile: LorentzianProfile, params: RateConstants) -> float:
    """Inversion at which the mapped spectrum falls to half its peak."""
    if profile.N_max >= threshold_inversion(params) * (1.0 - THRESHOLD_GUARD):
        raise DomainError("N_max must lie below the masing threshold")
    k, B = params.kappa_c, params.einstein_B
    return profile.N_max * k / (2.0 * k - 3.0 * B * profile.N_max)


def closed_form_fwhm(profile: LorentzianProfile, params: RateConstants) -> float:
    """Exact FWHM of the mapped Lorentzian.

    Solving n(N_half) = n(N_max)/2 gives N_half = N_max k / (2k - 3 B N_max),
    and the Lorentzian reaches N_half at fwhm/2 * sqrt(N_max/N_half - 1).
    Written without the ratio to stay accurate as N_max -> 0.
    """
    k, B = params.kappa_c, params.einstein_B
    if profile.N_max >= threshold_inversion(params) * (1.0 - THRESHOLD_GUARD):
        raise DomainError("N_max must lie below the masing threshold")
    # N_max/N_half - 1 == (k - 3 B N_max) / k
    return profile.fwhm * math.sqrt((k - 3.0 * B * profile.N_max) / k)


def _crossings(spectrum: Spectrum, baseline: float = 0.0) -> tuple[float, float, float]:
    f, v = spectrum.frequencies, spectrum.values - baseline
    i = int(np.argmax(v))
    peak = v[i]
    if i == 0 or i == len(v) - 1:
        raise DomainError("spectrum maximum lies on the grid edge")
    if peak <= 0:
        raise DomainError("spectrum has no positive peak")
    if np.count_nonzero(v == peak) > 1:
        raise DomainError("spectrum maximum is not unique")
    half = 0.5 * peak

    below = np.nonzero(v[:i] < half)[0]
    if not len(below):
        raise DomainError("low-frequency half-maximum crossing lies outside the grid")
    j = below[-1]
    low = f[j] + (half - v[j]) * (f[j + 1] - f[j]) / (v[j + 1] - v[j])

    above = np.nonzero(v[i + 1:] < half)[0]
    if not len(above):
        raise DomainError("high-frequency half-maximum crossing lies outside the grid")
    j = i + 1 + above[0]
    high = f[j - 1] + (half - v[j - 1]) * (f[j] - f[j - 1]) / (v[j] - v[j - 1])
    return float(low), float(f[i]), float(high)


def half_max_crossings(spectrum: Spectrum, baseline: float = 0.0) -> tuple[float, float, float]:
    """(low crossing, peak frequency, high crossing), linearly interpolated."""
    return _crossings(spectrum, baseline)


def measure_fwhm(spectrum: Spectrum, baseline: float = 0.0) -> float:
    low, _, high = _crossings(spectrum, baseline)
    return high - low


def measure_hwhm_low(spectrum: Spectrum, baseline: float = 0.0) -> float:
    low, peak, _ = _crossings(spectrum, baseline)
    return peak - low


def measure_hwhm_high(spectrum: Spectrum, baseline: float = 0.0) -> float:
    _, peak, high = _crossings(spectrum, baseline)
    return high - peak


def narrowing_report(
    below: LorentzianProfile,
    above: LorentzianProfile,
    params: RateConstants,
    grid,
) -> NarrowingReport:
    """Compare a weakly and a strongly inverted ensemble on the same grid.

    Widths are those of the ``above`` scenario before (``_in``) and after
    (``_out``) the photon map.
    """
    if below.N_max <= 0 or above.N_max <= 0:
        raise DomainError("both profiles need a positive N_max")
    spec_in = sample_profile(above, grid)
    spec_out = map_to_photons(spec_in, params)
    below_out = map_to_photons(sample_profile(below, grid), params)

    n_above = float(np.max(spec_out.values))
    n_below = float(np.max(below_out.values))
    amplitude_ratio = n_above / n_below
    return NarrowingReport(
        fwhm_in=measure_fwhm(spec_in),
        fwhm_out=measure_fwhm(spec_out),
        hwhm_low_in=measure_hwhm_low(spec_in),
        hwhm_low_out=measure_hwhm_low(spec_out),
        fwhm_out_below=measure_fwhm(below_out),
        amplitude_ratio=amplitude_ratio,
        peak_gain_ratio=(n_above / above.N_max) / (n_below / below.N_max),
    )
