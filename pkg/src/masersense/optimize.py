"""Damped least squares (Levenberg-Marquardt) shared by the fitting code."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MAX_ITERATIONS = 500
RSS_RTOL = 1e-10
GRAD_TOL = 1e-8
_LAMBDA_MAX = 1e16


@dataclass
class LMResult:
    params: np.ndarray
    rss: float
    jacobian: np.ndarray
    iterations: int
    converged: bool
    message: str
    rss_history: list[float] = field(default_factory=list)


def levenberg_marquardt(
    residuals: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    p0,
    *,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    max_iterations: int = MAX_ITERATIONS,
    rss_rtol: float = RSS_RTOL,
    grad_tol: float = GRAD_TOL,
    lam: float = 1e-3,
) -> LMResult:
    """Minimise ``sum(residuals(p)**2)``.

    Steps solve ``(J^T J + lam diag(J^T J)) dp = -J^T r``. A trial step is
    accepted only if it lowers the RSS, so the recorded history is
    non-increasing. ``project`` maps a trial point back into the feasible
    set (return None to reject it outright).

    Converges when an accepted step changes the RSS by less than
    ``rss_rtol`` relative, when ``|J^T r| < grad_tol``, or when the RSS is
    exactly zero. Either of the first two can fire on a short, heavily
    damped step in a flat valley, so they are confirmed with one undamped
    Gauss-Newton step: if that lowers the RSS by more than ``rss_rtol``
    relative it is taken and the iteration continues.
    """
    p = np.array(p0, dtype=float)
    r = residuals(p)
    rss = float(r @ r)
    if not np.isfinite(rss):
        raise ValueError("residuals are not finite at the starting point")
    J = jacobian(p)
    history = [rss]
    message = "maximum iterations reached"
    converged = False
    it = 0
    nu = 2.0

    diag = np.diag_indices(len(p))
    stale = True  # normal equations need rebuilding after an accepted step
    confirmed_at = None

    def confirm() -> bool:
        """Take an undamped Gauss-Newton step if it still pays off."""
        nonlocal p, r, rss, J, stale, it, lam, confirmed_at
        if confirmed_at == it or it >= max_iterations:
            return False
        it += 1
        confirmed_at = it
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        trial = p + step if np.all(np.isfinite(step)) else None
        if trial is not None and project is not None:
            trial = project(trial)
        if trial is None:
            return False
        r_new = residuals(trial)
        rss_new = float(r_new @ r_new)
        if not (np.isfinite(rss_new) and rss_new < rss * (1.0 - rss_rtol)):
            return False
        p, r, rss = trial, r_new, rss_new
        J = jacobian(p)
        stale = True
        history.append(rss)
        lam = 1e-3
        return True

    while it < max_iterations:
        if stale:
            g = J.T @ r
            if rss == 0.0:
                converged, message = True, "gradient below tolerance"
                break
            if np.linalg.norm(g) < grad_tol:
                if confirm():
                    continue
                converged, message = True, "gradient below tolerance"
                break
            A = J.T @ J
            d = A[diag].copy()
            d[d <= 0] = 1e-30 * max(1.0, float(d.max()))
            stale = False

        it += 1
        M = A.copy()
        M[diag] += lam * d
        try:
            step = np.linalg.solve(M, -g)
        except np.linalg.LinAlgError:
            step = None
        trial = None if step is None or not np.all(np.isfinite(step)) else p + step
        if trial is not None and project is not None:
            trial = project(trial)
        rss_new = np.inf
        if trial is not None:
            r_new = residuals(trial)
            rss_new = float(r_new @ r_new)

        if np.isfinite(rss_new) and rss_new < rss:
            # gain ratio: actual over predicted decrease (Nielsen damping update)
            predicted = float(step @ (lam * d * step - g))
            rho = (rss - rss_new) / predicted if predicted > 0 else 0.0
            rel = (rss - rss_new) / rss
            p, r, rss = trial, r_new, rss_new
            J = jacobian(p)
            stale = True
            history.append(rss)
            lam = max(lam * max(1 / 3, 1 - (2 * rho - 1) ** 3), 1e-15)
            nu = 2.0
            if rel < rss_rtol and not confirm():
                converged, message = True, "relative RSS change below tolerance"
                break
        else:
            lam *= nu
            nu *= 2.0
            if lam > _LAMBDA_MAX:
                message = "damping overflow: no decrease possible"
                break

    return LMResult(p, rss, J, it, converged, message, history)


def scaled_condition(jac: np.ndarray) -> float:
    """Condition number of J^T J after scaling it to unit diagonal."""
    A = jac.T @ jac
    s = np.sqrt(np.diag(A))
    if np.any(s == 0):
        return np.inf
    return float(np.linalg.cond(A / np.outer(s, s)))


def covariance(jac: np.ndarray, rss: float) -> np.ndarray | None:
    """Linearised parameter covariance ``inv(J^T J) * rss / (m - k)``."""
    m, k = jac.shape
    if m <= k:
        return None
    A = jac.T @ jac
    # Jacobi-scale before inverting; component amplitudes and widths differ by decades
    s = np.sqrt(np.diag(A))
    if np.any(s == 0):
        return None
    As = A / np.outer(s, s)
    if np.linalg.cond(As) > 1e14:
        return None
    inv = np.linalg.inv(As) / np.outer(s, s)
    return inv * (rss / (m - k))
