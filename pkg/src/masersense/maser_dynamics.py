"""Lotka-Volterra maser model.

Spins ``N`` and cavity photons ``n`` obey

    dN/dt = -2 B n N - gamma_s N
    dn/dt = -kappa_c n + B n N

The steady-state map ``n = gamma_s N / (kappa_c - 3 B N)`` is the
threshold-like correlation used for all lineshape simulations; the transient
integrator is exposed separately for threshold studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IntegrationError

#: Relative distance from the pole inside which the steady-state map refuses
#: to evaluate.
THRESHOLD_GUARD = 1e-9

DEFAULT_REL_TOL = 1e-8
DEFAULT_ABS_TOL = 1e-3


@dataclass(frozen=True)
class RateConstants:
    """Rate parameters of the maser model, all in s^-1."""

    einstein_B: float
    gamma_s: float
    kappa_c: float

    def __post_init__(self):
        for name in ("einstein_B", "gamma_s", "kappa_c"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")
            object.__setattr__(self, name, float(value))


#: Pentacene / strontium-titanate maser parameters.
TYPICAL_RATES = RateConstants(einstein_B=11e-8, gamma_s=4e4, kappa_c=2.1e6)


@dataclass(frozen=True)
class LVState:
    inverted_spins: float
    photons: float

    def __post_init__(self):
        if not (self.inverted_spins >= 0 and self.photons >= 0):
            raise DomainError(f"state must be non-negative, got N={self.inverted_spins}, n={self.photons}")
        if not (math.isfinite(self.inverted_spins) and math.isfinite(self.photons)):
            raise DomainError("state must be finite")


@dataclass(frozen=True)
class LVTrajectory:
    """Accepted integrator steps. ``step_sizes[k] == times[k+1] - times[k]``."""

    times: np.ndarray
    inverted_spins: np.ndarray
    photons: np.ndarray
    step_sizes: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.times)

    @property
    def states(self) -> list[LVState]:
        return [LVState(float(N), float(n)) for N, n in zip(self.inverted_spins, self.photons)]

    @property
    def final(self) -> LVState:
        return LVState(float(self.inverted_spins[-1]), float(self.photons[-1]))


# -- steady state -----------------------------------------------------------

def threshold_inversion(params: RateConstants) -> float:
    """Inverted-spin count at the pole of the steady-state map, kappa_c / (3 B)."""
    return params.kappa_c / (3.0 * params.einstein_B)


def _check_below_threshold(params: RateConstants, N):
    N = np.asarray(N, dtype=float)
    if np.any(~np.isfinite(N)):
        raise DomainError("inverted-spin count must be finite")
    if np.any(N < 0):
        raise DomainError(f"inverted-spin count must be non-negative, got min {N.min()!r}")
    limit = threshold_inversion(params) * (1.0 - THRESHOLD_GUARD)
    if np.any(N >= limit):
        raise DomainError(
            f"N={N.max():.6g} is at or above the masing threshold "
            f"{threshold_inversion(params):.6g}; the steady-state map diverges there"
        )
    return N


def _scalar_or_array(x: np.ndarray):
    return float(x) if x.ndim == 0 else x


def steady_state_photons(params: RateConstants, N):
    """Photon number in steady state for ``N`` inverted spins (scalar or array)."""
    N = _check_below_threshold(params, N)
    n = params.gamma_s * N / (params.kappa_c - 3.0 * params.einstein_B * N)
    return _scalar_or_array(n)


def steady_state_slope(params: RateConstants, N):
    """dn/dN of the steady-state map: gamma_s kappa_c / (kappa_c - 3 B N)^2."""
    N = _check_below_threshold(params, N)
    denom = params.kappa_c - 3.0 * params.einstein_B * N
    return _scalar_or_array(params.gamma_s * params.kappa_c / denom**2)


# -- transient integration --------------------------------------------------

def lv_rhs(params: RateConstants, N: float, n: float) -> tuple[float, float]:
    B, g, k = params.einstein_B, params.gamma_s, params.kappa_c
    return (-2.0 * B * n * N - g * N, -k * n + B * n * N)


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _f(params: RateConstants, y: np.ndarray) -> np.ndarray:
    return np.array(lv_rhs(params, y[0], y[1]))


def _initial_step(params, y0, f0, t_end, rel_tol, abs_tol):
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end)
    y1 = y0 + h0 * f0
    d2 = np.max(np.abs(_f(params, y1) - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, t_end)


def integrate_lv(
    params: RateConstants,
    initial: LVState,
    t_end: float,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    max_steps: int = 1_000_000,
) -> LVTrajectory:
    """Integrate the maser equations from t=0 to ``t_end`` with adaptive
    Dormand-Prince 5(4) steps and per-component error control.

    Every accepted step keeps both populations non-negative, never lets N
    grow, and (for N, n > 0) strictly decreases the conserved-when-lossless
    combination N + 2n. Candidates violating these are rejected and retried
    with a smaller step; undershoots of zero no larger than ``abs_tol`` are
    clipped.
    """
    if not (t_end > 0 and math.isfinite(t_end)):
        raise DomainError(f"t_end must be positive, got {t_end!r}")
    for name, tol in (("rel_tol", rel_tol), ("abs_tol", abs_tol)):
        if not (0 < tol <= 1e-2):
            raise DomainError(f"{name} must lie in (0, 1e-2], got {tol!r}")

    y = np.array([initial.inverted_spins, initial.photons], dtype=float)
    t = 0.0
    times, Ns, ns, steps = [t], [y[0]], [y[1]], []

    f = _f(params, y)
    h = _initial_step(params, y, f, t_end, rel_tol, abs_tol)
    k = np.empty((7, 2))
    n_steps = 0

    while t < t_end:
        if n_steps >= max_steps:
            raise IntegrationError(f"exceeded {max_steps} steps", t)
        min_h = 16 * np.finfo(float).eps * max(abs(t), t_end * 1e-12)
        if h < min_h:
            raise IntegrationError(f"step size underflow (h={h:.3e} s)", t)
        last = t + h >= t_end
        if last:
            h = t_end - t

        k[0] = f
        for i in range(1, 7):
            yi = y + h * np.dot(_A[i], k[:i])
            k[i] = _f(params, yi)
        y_new = y + h * np.dot(_B5[:6], k[:6])
        err_vec = h * np.dot(_E, k)
        scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))

        ok = err <= 1.0
        if ok and np.any(y_new < 0):
            if np.all(y_new > -abs_tol):
                y_new = np.maximum(y_new, 0.0)
            else:
                ok = False
        if ok and y_new[0] > y[0]:
            ok = False
        if ok and y[0] > 0 and y[1] > 0 and y_new[0] + 2 * y_new[1] >= y[0] + 2 * y[1]:
            ok = False

        if ok:
            t = t_end if last else t + h
            y = y_new
            f = _f(params, y)
            times.append(t)
            Ns.append(y[0])
            ns.append(y[1])
            steps.append(h)
            n_steps += 1
            factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= factor
        else:
            factor = 0.5 if err <= 1.0 else max(0.1, 0.9 * err ** -0.2)
            h *= factor

    return LVTrajectory(
        times=np.array(times),
        inverted_spins=np.array(Ns),
        photons=np.array(ns),
        step_sizes=np.array(steps),
    )


def _parabolic_vertex(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Vertex of the parabola through three points, falling back to the
    middle sample when the triple is not strictly concave."""
    d0, d2 = x[0] - x[1], x[2] - x[1]
    r0, r2 = y[0] - y[1], y[2] - y[1]
    det = d0 * d2 * (d2 - d0)
    a = (r2 * d0 - r0 * d2) / det
    b = (r0 * d2 * d2 - r2 * d0 * d0) / det
    if not a < 0:
        return float(x[1]), float(y[1])
    x_off = -b / (2 * a)
    # keep the vertex inside the bracket
    x_off = min(max(x_off, d0), d2)
    return float(x[1] + x_off), float(y[1] + b * x_off + a * x_off * x_off)


def peak_photons(traj: LVTrajectory) -> tuple[float, float]:
    """Time and value of the photon-number maximum, parabolically refined."""
    if len(traj) < 3:
        raise DomainError("trajectory needs at least 3 samples for peak refinement")
    i = int(np.argmax(traj.photons))
    if i == 0 or i == len(traj) - 1:
        return float(traj.times[i]), float(traj.photons[i])
    t_pk, n_pk = _parabolic_vertex(traj.times[i - 1:i + 2], traj.photons[i - 1:i + 2])
    return t_pk, max(n_pk, float(traj.photons[i]))
