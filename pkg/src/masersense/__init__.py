"""Maser-enhanced spin sensing: steady-state and transient maser dynamics,
masing-narrowed lineshapes, second-order hyperfine line asymmetry,
bi-Lorentzian spectral fitting and slope-detection magnetometry."""

from .errors import (
    ConfigError,
    DomainError,
    FitError,
    GridMismatchError,
    InputError,
    IntegrationError,
    MaserSenseError,
)
from .hfi import KdeCurve, ProtonSet, ShiftDistribution, enumerate_shifts, histogram, kde, max_shift_bound
from .lineshape import (
    LorentzianProfile,
    NarrowingReport,
    closed_form_fwhm,
    map_to_photons,
    measure_fwhm,
    narrowing_report,
    sample_profile,
)
from .magnetometry import (
    ExponentialModel,
    FieldFit,
    FieldResponse,
    SensitivityReport,
    fit_field_response,
    noise_sigma,
    peak_amplitude,
    sensitivity,
    sensitivity_report,
    slope_at,
    snr_db,
)
from .maser_dynamics import (
    TYPICAL_RATES,
    LVState,
    LVTrajectory,
    RateConstants,
    integrate_lv,
    peak_photons,
    steady_state_photons,
    steady_state_slope,
    threshold_inversion,
)
from .spectral_fit import (
    BiLorentzianModel,
    DetectorCalibration,
    FitResult,
    Linewidths,
    SplitLorentzianModel,
    auto_init,
    bootstrap_stderr,
    eval_bilorentzian,
    extract_linewidths,
    fit_bilorentzian,
    log_to_linear,
    linear_to_log,
    subtract_background,
)
from .spectrum import Spectrum, TimeTrace, ValueKind, uniform_grid

__version__ = "0.1.0"
