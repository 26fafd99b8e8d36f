"""Sampled spectra shared by the simulation and fitting modules."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


class ValueKind(str, enum.Enum):
    PHOTON_COUNT = "photon_count"
    LINEAR_AMPLITUDE = "linear_amplitude"
    LOG_AMPLITUDE_DB = "log_amplitude_dB"
    COUNT = "count"


_NON_NEGATIVE = {ValueKind.PHOTON_COUNT, ValueKind.LINEAR_AMPLITUDE, ValueKind.COUNT}


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Values sampled on a strictly increasing frequency axis (MHz)."""

    frequencies: np.ndarray
    values: np.ndarray
    value_kind: ValueKind = ValueKind.LINEAR_AMPLITUDE

    def __post_init__(self):
        f = np.array(self.frequencies, dtype=float)
        v = np.array(self.values, dtype=float)
        kind = ValueKind(self.value_kind)
        if f.ndim != 1 or v.shape != f.shape:
            raise DomainError(f"frequencies and values must be 1-D of equal length, got {f.shape} and {v.shape}")
        if len(f) == 0:
            raise DomainError("spectrum is empty")
        if not np.all(np.isfinite(f)) or not np.all(np.isfinite(v)):
            raise DomainError("spectrum contains non-finite entries")
        if len(f) > 1 and not np.all(np.diff(f) > 0):
            i = int(np.argmin(np.diff(f) > 0))
            raise DomainError(f"frequencies must be strictly increasing (violated after index {i})")
        if kind in _NON_NEGATIVE and np.any(v < 0):
            raise DomainError(f"{kind.value} values must be non-negative")
        f.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "value_kind", kind)

    def __len__(self):
        return len(self.frequencies)

    @property
    def step(self) -> float:
        """Smallest spacing of the frequency axis."""
        return float(np.min(np.diff(self.frequencies))) if len(self) > 1 else 0.0

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        d = np.diff(self.frequencies)
        return bool(np.allclose(d, d[0], rtol=rtol, atol=0)) if len(d) else True

    def with_values(self, values, value_kind=None) -> "Spectrum":
        return Spectrum(self.frequencies, values, self.value_kind if value_kind is None else value_kind)


def uniform_grid(center: float, half_span: float = 8.0, n_points: int = 1601) -> np.ndarray:
    """Uniform frequency grid center +- half_span (MHz); default step 10 kHz."""
    if half_span <= 0 or n_points < 3:
        raise DomainError("grid needs positive half-span and at least 3 points")
    grid = np.linspace(center - half_span, center + half_span, n_points)
    if n_points % 2:
        grid[n_points // 2] = center
    return grid


def normalize_peak(spectrum: Spectrum) -> Spectrum:
    """Scale so the maximum value is 1 (for plotting only)."""
    peak = float(np.max(spectrum.values))
    if peak <= 0:
        raise DomainError("cannot peak-normalize a spectrum whose maximum is not positive")
    return spectrum.with_values(spectrum.values / peak)


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Detector output (V) against time (s). ``times < 0`` is pre-trigger."""

    times: np.ndarray
    volts: np.ndarray
    B0_T: float | None = None
    freq_MHz: float | None = None

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.volts, dtype=float)
        if t.ndim != 1 or v.shape != t.shape:
            raise DomainError(f"times and volts must be 1-D of equal length, got {t.shape} and {v.shape}")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(v)):
            raise DomainError("trace contains non-finite entries")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise DomainError("times must be strictly increasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "volts", v)

    def __len__(self):
        return len(self.times)

    def with_volts(self, volts) -> "TimeTrace":
        return TimeTrace(self.times, volts, self.B0_T, self.freq_MHz)
