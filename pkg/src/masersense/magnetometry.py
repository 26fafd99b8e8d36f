"""Slope-detection magnetometry: trace statistics, field response, sensitivity.

The sensitivity is the field that produces unit signal-to-noise in one
second of bandwidth, ``eta = sigma_s / (m_s * sqrt(2 * delta_f))``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import optimize
from .errors import DomainError, FitError
from .maser_dynamics import _parabolic_vertex
from .spectrum import TimeTrace

MIN_NOISE_SAMPLES = 30
MIN_FIELD_POINTS = 4


@dataclass(frozen=True, eq=False)
class FieldResponse:
    """Signal amplitude (V) against applied field (T)."""

    fields: np.ndarray
    amplitudes: np.ndarray
    amp_errors: np.ndarray | None = None
    field_errors: np.ndarray | None = None

    def __post_init__(self):
        B = np.array(self.fields, dtype=float)
        A = np.array(self.amplitudes, dtype=float)
        if B.ndim != 1 or A.shape != B.shape:
            raise DomainError("fields and amplitudes must be 1-D of equal length")
        if len(B) < 3:
            raise DomainError("field response needs at least 3 points")
        if not np.all(np.diff(B) > 0):
            raise DomainError("fields must be strictly increasing")
        object.__setattr__(self, "fields", B)
        object.__setattr__(self, "amplitudes", A)
        for name in ("amp_errors", "field_errors"):
            err = getattr(self, name)
            if err is not None:
                err = np.array(err, dtype=float)
                if err.shape != B.shape or np.any(err < 0):
                    raise DomainError(f"{name} must be non-negative and match fields")
                object.__setattr__(self, name, err)

    def __len__(self):
        return len(self.fields)


@dataclass(frozen=True)
class ExponentialModel:
    """A(B) = a + b exp(c B), B in tesla."""

    a: float
    b: float
    c: float

    def __call__(self, B):
        return self.a + self.b * np.exp(self.c * np.asarray(B, dtype=float))


@dataclass(frozen=True)
class FieldFit:
    model: ExponentialModel
    param_stderr: dict[str, float] | None
    rss: float
    iterations: int
    converged: bool
    degenerate: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = dataclasses.asdict(self.model)
        return d


@dataclass(frozen=True)
class SensitivityReport:
    sigma_s: float
    m_s: float
    delta_f: float
    eta: float
    B0: float | None = None

    def __post_init__(self):
        if not (self.sigma_s > 0 and self.delta_f > 0 and self.eta > 0):
            raise DomainError("sigma_s, delta_f and eta must be positive")

    @property
    def eta_pT_per_rtHz(self) -> float:
        return self.eta * 1e12

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["eta_pT_per_rtHz"] = self.eta_pT_per_rtHz
        return d


# -- time traces ------------------------------------------------------------

def _moving_average(v: np.ndarray, window: int) -> np.ndarray:
    kernel = np.ones(window) / window
    return np.convolve(v, kernel, mode="same")


def peak_amplitude(trace: TimeTrace, smoothing: int | None = None) -> float:
    """Largest |V|, optionally after a moving average of ``smoothing`` samples,
    refined by a parabola through the three samples around the maximum."""
    if len(trace) == 0:
        raise DomainError("trace is empty")
    v = trace.volts
    if smoothing is not None:
        if smoothing < 1:
            raise DomainError("smoothing window must be a positive sample count")
        v = _moving_average(v, smoothing)
    v = np.abs(v)
    i = int(np.argmax(v))
    if i == 0 or i == len(v) - 1:
        return float(v[i])
    _, peak = _parabolic_vertex(trace.times[i - 1:i + 2], v[i - 1:i + 2])
    return max(peak, float(v[i]))


def _window_mask(trace: TimeTrace, window) -> np.ndarray:
    if window is None:
        return trace.times < 0
    t0, t1 = window
    if not t0 < t1:
        raise DomainError("noise window must have start < end")
    if t0 < trace.times[0] or t1 > trace.times[-1]:
        raise DomainError("noise window extends beyond the trace")
    return (trace.times >= t0) & (trace.times <= t1)


def noise_sigma(trace: TimeTrace, window: tuple[float, float] | None = None) -> float:
    """Sample standard deviation of the trace inside ``window`` (seconds).

    The default window is the pre-trigger segment ``t < 0``. Only the mean
    is removed; no detrending.
    """
    mask = _window_mask(trace, window)
    n = int(np.count_nonzero(mask))
    if n < MIN_NOISE_SAMPLES:
        raise DomainError(f"noise window holds {n} samples; need at least {MIN_NOISE_SAMPLES}")
    v = trace.volts[mask]
    if np.ptp(v) == 0:
        return 0.0  # mean removal would leave round-off on a constant window
    return float(np.std(v, ddof=1))


def snr_db(trace: TimeTrace, noise_window: tuple[float, float] | None = None,
           smoothing: int | None = None) -> float:
    """20 log10(peak amplitude / noise sigma)."""
    sigma = noise_sigma(trace, noise_window)
    if sigma == 0:
        raise DomainError("noise sigma is zero; SNR is unbounded")
    return 20.0 * math.log10(peak_amplitude(trace, smoothing) / sigma)


# -- field response ---------------------------------------------------------

def _linear_ab(x, y, w, g):
    """Best (a, beta) for fixed rate g in y ~ a + beta exp(g x)."""
    X = np.column_stack([np.ones_like(x), np.exp(g * x)])
    coef, *_ = np.linalg.lstsq(w[:, None] * X, w * y, rcond=None)
    r = w * (X @ coef - y)
    return coef, float(r @ r)


def fit_field_response(data: FieldResponse, weighted: bool = False,
                       max_iterations: int = optimize.MAX_ITERATIONS) -> FieldFit:
    """Fit A(B) = a + b exp(c B).

    Fields are mapped onto [-1, 1] for conditioning; the rate is seeded by a
    scan over that scaled axis with (a, b) solved linearly at each trial
    rate, then all three are refined by damped least squares and mapped
    back. Data with no detectable variation are returned as a constant and
    flagged degenerate, since b and c are then not identifiable.
    """
    if len(data) < MIN_FIELD_POINTS:
        raise FitError(f"need at least {MIN_FIELD_POINTS} field points, got {len(data)}")
    B, y = data.fields, data.amplitudes
    mid = 0.5 * (B[0] + B[-1])
    half = 0.5 * (B[-1] - B[0])
    x = (B - mid) / half

    scale = float(np.max(np.abs(y)))
    if np.ptp(y) <= 1e-12 * scale:
        return FieldFit(ExponentialModel(float(np.mean(y)), 0.0, 0.0), None, float(np.sum((y - y.mean()) ** 2)),
                        0, True, True, "constant response; b and c unidentifiable")

    w = np.ones_like(y)
    if weighted:
        if data.amp_errors is None or np.any(data.amp_errors <= 0):
            raise FitError("weighted fit needs positive amplitude errors")
        w = 1.0 / data.amp_errors
        w = w / w.max()
    # centred, unit-span amplitudes keep the absolute gradient tolerance above
    # the round-off floor even when the offset dwarfs the exponential term
    offset = float(np.mean(y))
    amp_scale = float(np.ptp(y))
    yn = (y - offset) / amp_scale

    rates = np.concatenate([-np.geomspace(30.0, 1e-3, 120), np.geomspace(1e-3, 30.0, 120)])
    g0 = min(rates, key=lambda g: _linear_ab(x, yn, w, g)[1])
    (a0, beta0), _ = _linear_ab(x, yn, w, g0)

    def resid(p):
        return w * (p[0] + p[1] * np.exp(p[2] * x) - yn)

    def jac(p):
        e = np.exp(p[2] * x)
        return w[:, None] * np.column_stack([np.ones_like(x), e, p[1] * x * e])

    lm = optimize.levenberg_marquardt(resid, jac, [a0, beta0, g0], max_iterations=max_iterations)
    a, beta, g = lm.params
    a, beta = offset + a * amp_scale, beta * amp_scale
    m = mid / half
    c = g / half
    b = beta * math.exp(-g * m)
    rss = lm.rss * amp_scale**2

    degenerate = abs(g) < 1e-6 or optimize.scaled_condition(lm.jacobian) > 1e14
    stderr = None
    if lm.converged and not degenerate:
        cov = optimize.covariance(lm.jacobian, lm.rss)
        if cov is not None:
            e = math.exp(-g * m)
            # d(a, b, c) / d(a_n, beta_n, g) with a = y0 + s a_n, b = s beta_n e^{-g m}, c = g / half
            T = np.array([
                [amp_scale, 0.0, 0.0],
                [0.0, amp_scale * e, -m * beta * e],
                [0.0, 0.0, 1.0 / half],
            ])
            cov = T @ cov @ T.T
            stderr = dict(zip("abc", map(float, np.sqrt(np.abs(np.diag(cov))))))
    return FieldFit(ExponentialModel(float(a), float(b), float(c)), stderr, rss, lm.iterations,
                    lm.converged, degenerate, lm.message)


def slope_at(model: ExponentialModel, B0: float) -> float:
    """dA/dB at B0 (V/T)."""
    return model.b * model.c * math.exp(model.c * B0)


def sensitivity(sigma_s: float, m_s: float, delta_f: float) -> float:
    """Minimum detectable field per root bandwidth, T/sqrt(Hz)."""
    for name, value in (("sigma_s", sigma_s), ("m_s", m_s), ("delta_f", delta_f)):
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"{name} must be positive, got {value!r}")
    return sigma_s / (m_s * math.sqrt(2.0 * delta_f))


def sensitivity_report(sigma_s: float, m_s: float, delta_f: float, B0: float | None = None) -> SensitivityReport:
    return SensitivityReport(sigma_s, m_s, delta_f, sensitivity(sigma_s, m_s, delta_f), B0)
