"""Bi-Lorentzian lineshape fitting and detector-signal conditioning.

The default model is the sum of two Lorentzians on a flat baseline; the
lower-centre component is the "low-frequency component" whose HWHM is
quoted for the asymmetric zero-field line. A single peak with different
left/right half-widths ("split" Lorentzian) is available as an alternative.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import optimize
from .errors import DomainError, FitError, GridMismatchError
from .lineshape import half_max_crossings
from .spectrum import Spectrum, TimeTrace, ValueKind

MIN_SAMPLES = 10
#: A component whose amplitude falls below this fraction of the larger one
#: is reported as vanished.
VANISHING_AMPLITUDE = 1e-6
#: Scaled J^T J condition number above which parameters count as
#: unidentifiable (well-posed two-component fits stay below ~1e9).
MAX_CONDITION = 1e11
#: Multi-start stops once a converged fit's residual sum of squares is within
#: this fraction above the expected noise contribution.
EARLY_STOP_MARGIN = 0.2
#: Iteration cap of the single-Lorentzian pre-fit behind the shoulder seed.
SHOULDER_ITERATIONS = 50


@dataclass(frozen=True)
class BiLorentzianModel:
    amp1: float
    center1: float
    hwhm1: float
    amp2: float
    center2: float
    hwhm2: float
    baseline: float = 0.0

    PARAMS = ("amp1", "center1", "hwhm1", "amp2", "center2", "hwhm2", "baseline")

    def __post_init__(self):
        if not (self.hwhm1 > 0 and self.hwhm2 > 0):
            raise DomainError("half-widths must be positive")
        if self.amp1 < 0 or self.amp2 < 0:
            raise DomainError("amplitudes must be non-negative")

    @classmethod
    def from_vector(cls, p) -> "BiLorentzianModel":
        return cls(*(float(x) for x in p))

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in self.PARAMS])

    def ordered(self) -> "BiLorentzianModel":
        """Same curve with component 1 at the lower centre."""
        if self.center1 <= self.center2:
            return self
        return BiLorentzianModel(self.amp2, self.center2, self.hwhm2,
                                 self.amp1, self.center1, self.hwhm1, self.baseline)

    def values(self, frequencies) -> np.ndarray:
        return _bilorentzian(self.to_vector(), np.asarray(frequencies, dtype=float))

    @property
    def low_component_hwhm(self) -> float:
        return self.ordered().hwhm1


@dataclass(frozen=True)
class SplitLorentzianModel:
    """Single peak with independent half-widths below and above the centre."""

    amp: float
    center: float
    hwhm_low: float
    hwhm_high: float
    baseline: float = 0.0

    PARAMS = ("amp", "center", "hwhm_low", "hwhm_high", "baseline")

    def __post_init__(self):
        if not (self.hwhm_low > 0 and self.hwhm_high > 0):
            raise DomainError("half-widths must be positive")
        if self.amp < 0:
            raise DomainError("amplitude must be non-negative")

    @classmethod
    def from_vector(cls, p) -> "SplitLorentzianModel":
        return cls(*(float(x) for x in p))

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in self.PARAMS])

    def ordered(self) -> "SplitLorentzianModel":
        return self

    def values(self, frequencies) -> np.ndarray:
        return _split(self.to_vector(), np.asarray(frequencies, dtype=float))

    @property
    def low_component_hwhm(self) -> float:
        return self.hwhm_low


@dataclass(frozen=True)
class FitResult:
    model: BiLorentzianModel | SplitLorentzianModel
    param_stderr: dict[str, float] | None
    rss: float
    iterations: int
    converged: bool
    degenerate: bool = False
    message: str = ""
    rss_history: list[float] = field(default_factory=list, repr=False)
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "model_type": type(self.model).__name__,
            "parameters": dataclasses.asdict(self.model),
            "param_stderr": self.param_stderr,
            "rss": self.rss,
            "iterations": self.iterations,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "message": self.message,
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True)
class Linewidths:
    """Widths of a fitted curve (MHz).

    ``hwhm_low``/``hwhm_high`` are measured from the peak of the composite
    curve to its half-maximum crossings; ``hwhm_low_component`` is the
    half-width parameter of the low-frequency component itself.
    """

    fwhm: float
    hwhm_low: float
    hwhm_high: float
    hwhm_low_component: float
    peak_frequency: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class DetectorCalibration:
    volts_per_dB: float = 0.022
    external_attenuation_dB: float = 0.0

    def __post_init__(self):
        if not (self.volts_per_dB > 0 and math.isfinite(self.volts_per_dB)):
            raise DomainError(f"volts_per_dB must be positive, got {self.volts_per_dB!r}")
        if not (self.external_attenuation_dB >= 0 and math.isfinite(self.external_attenuation_dB)):
            raise DomainError("external attenuation must be non-negative")


# -- model functions --------------------------------------------------------

def _lorentz(f, a, c, w):
    u = (f - c) / w
    q = 1.0 / (1.0 + u * u)
    return a * q, u, q


def _bilorentzian(p, f):
    return _lorentz(f, p[0], p[1], p[2])[0] + _lorentz(f, p[3], p[4], p[5])[0] + p[6]


def _bilorentzian_jac(p, f):
    J = np.empty((len(f), 7))
    for k in (0, 3):
        a, c, w = p[k], p[k + 1], p[k + 2]
        _, u, q = _lorentz(f, a, c, w)
        J[:, k] = q
        J[:, k + 1] = 2.0 * a * u * q * q / w
        J[:, k + 2] = 2.0 * a * u * u * q * q / w
    J[:, 6] = 1.0
    return J


def _split(p, f):
    a, c, wl, wh, b = p
    w = np.where(f < c, wl, wh)
    return _lorentz(f, a, c, w)[0] + b


def _split_jac(p, f):
    a, c, wl, wh, _ = p
    low = f < c
    w = np.where(low, wl, wh)
    _, u, q = _lorentz(f, a, c, w)
    J = np.zeros((len(f), 5))
    J[:, 0] = q
    J[:, 1] = 2.0 * a * u * q * q / w
    dw = 2.0 * a * u * u * q * q / w
    J[low, 2] = dw[low]
    J[~low, 3] = dw[~low]
    J[:, 4] = 1.0
    return J


def eval_bilorentzian(model: BiLorentzianModel | SplitLorentzianModel, frequencies) -> Spectrum:
    f = np.asarray(frequencies, dtype=float)
    return Spectrum(f, model.values(f), ValueKind.LINEAR_AMPLITUDE)


# -- initialisation ---------------------------------------------------------

def _crossing_widths(f, z, i):
    """Distances from index ``i`` to the half-maximum crossings on each side
    (None where the data never drops below half)."""
    half = 0.5 * z[i]
    left = right = None
    below = np.nonzero(z[:i] < half)[0]
    if len(below):
        j = below[-1]
        left = f[i] - (f[j] + (half - z[j]) * (f[j + 1] - f[j]) / (z[j + 1] - z[j]))
    above = np.nonzero(z[i + 1:] < half)[0]
    if len(above):
        j = i + 1 + above[0]
        right = (f[j - 1] + (half - z[j - 1]) * (f[j] - f[j - 1]) / (z[j] - z[j - 1])) - f[i]
    return left, right


def auto_init(spectrum: Spectrum) -> BiLorentzianModel:
    """Seed component 1 at the peak with the steep-side half-width, and
    component 2 at the centroid of what component 1 leaves unexplained."""
    return _seeds(spectrum.frequencies, spectrum.values)[0]


def _seeds(f, y) -> list[BiLorentzianModel]:
    """Starting models, the documented auto-initialisation first.

    The alternates swap the seed widths, put component 2 at the residual
    maximum instead of its centroid, nest a broad component under the
    peak, and fit a narrow line on the shoulder of a broad one; together
    they cover the local minima a single start falls into.
    """
    step = float(np.min(np.diff(f)))
    span = f[-1] - f[0]
    baseline = float(np.min(y))
    z = y - baseline
    i = int(np.argmax(z))
    amp1, c1 = float(z[i]), float(f[i])
    if amp1 <= 0:
        raise FitError("spectrum is flat; nothing to fit")
    left, right = _crossing_widths(f, z, i)
    widths = [w for w in (left, right) if w is not None and w > 0]
    hwhm1 = float(max(min(widths) if widths else span / 4, step))
    hwhm_wide = float(max(max(widths) if widths else span / 4, step))

    resid = np.clip(z - _lorentz(f, amp1, c1, hwhm1)[0], 0.0, None)
    mass = float(np.trapezoid(resid, f))
    if mass > 0 and resid.max() > 1e-6 * amp1:
        amp2 = float(resid.max())
        center2 = float(np.trapezoid(resid * f, f) / mass)
        hwhm2 = float(max(mass / (math.pi * amp2), step))
        k = int(np.argmax(resid))
        rl, rr = _crossing_widths(f, resid, k)
        rw = [w for w in (rl, rr) if w is not None and w > 0]
        at_max = (amp2, float(f[k]), float(max(np.mean(rw) if rw else hwhm2, step)))
    else:
        amp2, center2, hwhm2 = 0.01 * amp1, c1 + hwhm1, hwhm1
        at_max = (amp2, center2, hwhm2)

    # broad component first, on a zero baseline: a weak narrow line on the
    # shoulder of a broad one shows up as the largest excess over the best
    # single Lorentzian
    yl, yr = _crossing_widths(f, y, i)
    yw = [w for w in (yl, yr) if w is not None and w > 0]
    w_sym = float(max(np.mean(yw) if yw else span / 4, step))
    broad = _single_lorentzian(f, y, float(y[i]), c1, w_sym)
    misfit = np.clip(y - _lorentz(f, *broad)[0], 0.0, None)
    k = int(np.argmax(misfit))
    ml, mr = _crossing_widths(f, misfit, k)
    mw = [w for w in (ml, mr) if w is not None and w > 0]
    shoulder = BiLorentzianModel(*broad, float(max(misfit[k], 1e-3 * amp1)), float(f[k]),
                                 float(max(np.mean(mw) if mw else broad[2] / 4, step)), 0.0)

    seeds = [
        BiLorentzianModel(amp1, c1, hwhm1, amp2, center2, hwhm2, baseline),
        BiLorentzianModel(amp1, c1, hwhm2, amp2, center2, hwhm1, baseline),
        BiLorentzianModel(amp1, c1, hwhm1, *at_max, baseline),
        BiLorentzianModel(0.5 * amp1, c1, hwhm1, 0.5 * amp1, c1 + step, hwhm_wide, baseline),
        shoulder,
    ]
    return seeds


def _single_lorentzian(f, y, amp, center, hwhm) -> tuple[float, float, float]:
    """Least-squares single Lorentzian on a zero baseline (a few LM steps)."""
    lo, hi = f[0], f[-1]
    step = float(np.min(np.diff(f)))

    def project(p):
        return np.array([max(p[0], 0.0), min(max(p[1], lo), hi), min(max(abs(p[2]), step), hi - lo)])

    def jac(p):
        _, u, q = _lorentz(f, *p)
        return np.column_stack([q, 2 * p[0] * u * q * q / p[2], 2 * p[0] * u * u * q * q / p[2]])

    lm = optimize.levenberg_marquardt(lambda p: _lorentz(f, *p)[0] - y, jac, project([amp, center, hwhm]),
                                      project=project, max_iterations=SHOULDER_ITERATIONS)
    return float(lm.params[0]), float(lm.params[1]), float(lm.params[2])


def _split_init(f, y) -> SplitLorentzianModel:
    step = float(np.min(np.diff(f)))
    baseline = float(np.min(y))
    z = y - baseline
    i = int(np.argmax(z))
    left, right = _crossing_widths(f, z, i)
    fallback = (f[-1] - f[0]) / 4
    return SplitLorentzianModel(
        float(z[i]), float(f[i]),
        max(left or fallback, step), max(right or fallback, step),
        baseline,
    )


# -- fitting ----------------------------------------------------------------

def _project_bi(lo, hi, min_width):
    # centres stay in the observed window and widths below its span, so a
    # surplus component must vanish or merge instead of mimicking the baseline
    def project(p):
        q = p.copy()
        q[[0, 3]] = np.maximum(q[[0, 3]], 0.0)
        q[[1, 4]] = np.clip(q[[1, 4]], lo, hi)
        q[[2, 5]] = np.clip(np.abs(q[[2, 5]]), min_width, hi - lo)
        return q
    return project


def _project_split(lo, hi, min_width):
    def project(p):
        q = p.copy()
        q[0] = max(q[0], 0.0)
        q[1] = min(max(q[1], lo), hi)
        q[[2, 3]] = np.clip(np.abs(q[[2, 3]]), min_width, hi - lo)
        return q
    return project


def _run(kind, f, y, p0, max_iterations):
    if kind == "bi_lorentzian":
        fn, jac, proj = _bilorentzian, _bilorentzian_jac, _project_bi
    else:
        fn, jac, proj = _split, _split_jac, _project_split
    lo, hi = f[0], f[-1]
    return optimize.levenberg_marquardt(
        lambda p: fn(p, f) - y,
        lambda p: jac(p, f),
        proj(lo, hi, 1e-9 * (hi - lo))(np.asarray(p0, dtype=float)),
        project=proj(lo, hi, 1e-9 * (hi - lo)),
        max_iterations=max_iterations,
    )


def _is_degenerate(model, f) -> bool:
    """Vanishing width, vanished or coincident components, or a component
    so wide or so far out that it is indistinguishable from the baseline."""
    step = float(np.min(np.diff(f)))
    lo, hi = f[0], f[-1]
    if isinstance(model, SplitLorentzianModel):
        return (
            min(model.hwhm_low, model.hwhm_high) < 0.5 * step
            or model.amp == 0
            or not lo < model.center < hi
            or max(model.hwhm_low, model.hwhm_high) >= 0.999 * (hi - lo)
        )
    top = max(model.amp1, model.amp2)
    return (
        min(model.hwhm1, model.hwhm2) < 0.5 * step
        or max(model.hwhm1, model.hwhm2) >= 0.999 * (hi - lo)
        or abs(model.center2 - model.center1) < step
        or min(model.amp1, model.amp2) <= VANISHING_AMPLITUDE * top
        or not (lo < model.center1 < hi and lo < model.center2 < hi)
    )


_AMPLITUDE_PARAMS = {"bi_lorentzian": [0, 3, 6], "split_lorentzian": [0, 4]}


def _build_result(kind, lm, f, scale):
    cls = BiLorentzianModel if kind == "bi_lorentzian" else SplitLorentzianModel
    amp_idx = _AMPLITUDE_PARAMS[kind]
    params = lm.params.copy()
    params[amp_idx] *= scale
    raw = cls.from_vector(params)
    degenerate = _is_degenerate(raw, f) or optimize.scaled_condition(lm.jacobian) > MAX_CONDITION
    stderr = None
    if lm.converged and not degenerate:
        cov = optimize.covariance(lm.jacobian, lm.rss)
        if cov is not None:
            err = np.sqrt(np.abs(np.diag(cov)))
            err[amp_idx] *= scale
            if kind == "bi_lorentzian" and raw.center1 > raw.center2:
                err = err[[3, 4, 5, 0, 1, 2, 6]]
            stderr = dict(zip(cls.PARAMS, map(float, err)))
    return FitResult(
        model=raw.ordered(),
        param_stderr=stderr,
        rss=lm.rss * scale**2,
        iterations=lm.iterations,
        converged=lm.converged,
        degenerate=degenerate,
        message=lm.message,
        rss_history=[r * scale**2 for r in lm.rss_history],
        n_samples=len(f),
    )


def fit_bilorentzian(
    spectrum: Spectrum,
    init: BiLorentzianModel | SplitLorentzianModel | None = None,
    model: str = "bi_lorentzian",
    max_iterations: int = optimize.MAX_ITERATIONS,
) -> FitResult:
    """Least-squares fit of a linear-scale spectrum.

    Without ``init`` the bi-Lorentzian fit is run from :func:`auto_init` and
    a few deterministic alternate starts; the converged run with the lowest
    RSS is kept. Non-convergence and degenerate solutions (vanishing
    width, vanished or coincident components) are flagged on the result,
    never raised.
    """
    if spectrum.value_kind is ValueKind.LOG_AMPLITUDE_DB:
        raise FitError("spectrum is in dB; convert with log_to_linear first")
    return fit_arrays(spectrum.frequencies, spectrum.values, init, model, max_iterations)


def fit_arrays(
    frequencies,
    values,
    init: BiLorentzianModel | SplitLorentzianModel | None = None,
    model: str = "bi_lorentzian",
    max_iterations: int = optimize.MAX_ITERATIONS,
) -> FitResult:
    """:func:`fit_bilorentzian` on bare arrays, for data such as noisy
    synthetic spectra that may dip below zero."""
    if model not in ("bi_lorentzian", "split_lorentzian"):
        raise FitError(f"unknown model {model!r}")
    f = np.asarray(frequencies, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(f) < MIN_SAMPLES:
        raise FitError(f"need at least {MIN_SAMPLES} samples, got {len(f)}")
    if y.shape != f.shape or not np.all(np.diff(f) > 0):
        raise FitError("frequencies must be strictly increasing and match values")

    # fit on unit amplitude scale so the absolute gradient tolerance is scale-free
    scale = float(np.max(np.abs(y)))
    if scale == 0:
        raise FitError("spectrum is identically zero; nothing to fit")
    yn = y / scale
    amp_idx = _AMPLITUDE_PARAMS[model]

    def scaled(m):
        p = m.to_vector()
        p[amp_idx] /= scale
        return p

    if model == "split_lorentzian":
        p0 = scaled(init or _split_init(f, y))
        return _build_result(model, _run(model, f, yn, p0, max_iterations), f, scale)

    starts = [init] if init is not None else _seeds(f, y)
    # a converged start whose residual is already at the noise floor cannot be
    # bettered by the remaining starts, so the search stops there
    accept = (len(f) - 7) * _noise_floor(yn) ** 2 * (1.0 + EARLY_STOP_MARGIN)
    best = None
    for seed in starts:
        lm = _run(model, f, yn, scaled(seed), max_iterations)
        if best is None or (lm.converged, -lm.rss) > (best.converged, -best.rss):
            best = lm
        if best.converged and best.rss <= accept:
            break
    return _build_result(model, best, f, scale)


def _noise_floor(y: np.ndarray) -> float:
    """Robust per-sample noise estimate from fourth differences.

    Fourth differences of a line sampled finely against its width are tiny, so
    their spread measures the noise rather than the curvature; white noise of
    standard deviation s gives fourth differences of standard deviation
    s*sqrt(70).
    """
    if len(y) < 5:
        return 0.0
    d4 = np.diff(y, 4)
    return float(1.4826 * np.median(np.abs(d4 - np.median(d4))) / np.sqrt(70.0))


def bootstrap_stderr(
    spectrum: Spectrum,
    fit: FitResult,
    n_resamples: int = 200,
    seed: int | None = 0,
) -> dict[str, float]:
    """Residual-bootstrap standard errors, refitting from the fitted model."""
    rng = np.random.default_rng(seed)
    f = spectrum.frequencies
    fitted = fit.model.values(f)
    resid = spectrum.values - fitted
    kind = "bi_lorentzian" if isinstance(fit.model, BiLorentzianModel) else "split_lorentzian"
    samples = []
    for _ in range(n_resamples):
        y = fitted + rng.choice(resid, size=len(resid), replace=True)
        refit = fit_arrays(f, y, init=fit.model, model=kind)
        samples.append(refit.model.to_vector())
    err = np.std(np.array(samples), axis=0, ddof=1)
    return dict(zip(type(fit.model).PARAMS, map(float, err)))


def extract_linewidths(fit: FitResult, grid) -> Linewidths:
    """Half-maximum widths of the fitted curve (baseline removed) on ``grid``."""
    if not fit.converged:
        raise FitError("fit did not converge; linewidths are undefined")
    grid = np.asarray(grid, dtype=float)
    curve = Spectrum(grid, fit.model.values(grid) - fit.model.baseline, ValueKind.LINEAR_AMPLITUDE)
    low, peak, high = half_max_crossings(curve)
    return Linewidths(
        fwhm=high - low,
        hwhm_low=peak - low,
        hwhm_high=high - peak,
        hwhm_low_component=fit.model.low_component_hwhm,
        peak_frequency=peak,
    )


# -- detector conditioning --------------------------------------------------

def _values_of(x):
    if isinstance(x, Spectrum):
        return x.values
    if isinstance(x, TimeTrace):
        return x.volts
    return np.asarray(x, dtype=float)


def _rewrap(x, values, kind):
    if isinstance(x, Spectrum):
        return Spectrum(x.frequencies, values, kind)
    if isinstance(x, TimeTrace):
        return x.with_volts(values)
    return values


def log_to_linear(x, cal: DetectorCalibration = DetectorCalibration(), *, source: str | None = None,
                  normalize: bool = False):
    """Logarithmic-detector output to linear power.

    ``source`` is ``"volts"`` (raw detector output, V) or ``"dB"``; a
    Spectrum tagged ``log_amplitude_dB`` defaults to dB, anything else to
    volts. Power is referred to the detector input plus the external
    attenuation: ``dB = volts / volts_per_dB + attenuation``.
    """
    if source is None:
        is_db = isinstance(x, Spectrum) and x.value_kind is ValueKind.LOG_AMPLITUDE_DB
        source = "dB" if is_db else "volts"
    if source not in ("volts", "dB"):
        raise DomainError(f"source must be 'volts' or 'dB', got {source!r}")
    v = _values_of(x)
    dB = (v / cal.volts_per_dB if source == "volts" else v) + cal.external_attenuation_dB
    power = 10.0 ** (dB / 10.0)
    if normalize:
        power = power / power.max()
    return _rewrap(x, power, ValueKind.LINEAR_AMPLITUDE)


def linear_to_log(x, cal: DetectorCalibration = DetectorCalibration(), *, target: str = "volts"):
    """Inverse of :func:`log_to_linear` (without normalisation)."""
    if target not in ("volts", "dB"):
        raise DomainError(f"target must be 'volts' or 'dB', got {target!r}")
    p = _values_of(x)
    if np.any(p <= 0):
        raise DomainError("linear power must be positive to take its logarithm")
    dB = 10.0 * np.log10(p) - cal.external_attenuation_dB
    out = dB * cal.volts_per_dB if target == "volts" else dB
    if isinstance(x, Spectrum):
        if target != "dB":
            raise DomainError("spectra convert to dB only; there is no detector-volts spectrum kind")
        return Spectrum(x.frequencies, out, ValueKind.LOG_AMPLITUDE_DB)
    return _rewrap(x, out, None)


def subtract_background(signal, background):
    """Pointwise ``signal - background`` on identical axes, clipped at zero.

    Returns ``(result, n_clipped)``.
    """
    if type(signal) is not type(background):
        raise GridMismatchError("signal and background must be the same kind of object")
    if isinstance(signal, Spectrum):
        a, b = signal.frequencies, background.frequencies
    else:
        a, b = signal.times, background.times
    if a.shape != b.shape or not np.array_equal(a, b):
        raise GridMismatchError("signal and background are sampled on different axes")
    diff = _values_of(signal) - _values_of(background)
    negative = diff < 0
    out = np.where(negative, 0.0, diff)
    kind = ValueKind.LINEAR_AMPLITUDE
    return _rewrap(signal, out, kind), int(np.count_nonzero(negative))
