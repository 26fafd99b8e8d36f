"""Second-order hyperfine lineshape of the zero-field |X> <-> |Z> transition.

Each of the 2**P proton spin configurations shifts the transition by

    delta = (sum_i s_i rho_i A_i)**2 / (4 (E_X - E_Y)),   s_i = +-1

(the |Z> shift is neglected). The shifts are always >= 0, so the line
has a one-sided tail toward higher frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .spectrum import Spectrum, ValueKind

MAX_PROTONS = 24
DEFAULT_A_ZZ = -61.0
DEFAULT_ZFS_XY = 107.5
_CHUNK = 1 << 20


@dataclass(frozen=True)
class ProtonSet:
    """Spin densities and hyperfine couplings (MHz) of the coupled protons.

    ``A_zz`` may be a scalar applied to every proton or one value per proton.
    """

    rho: tuple[float, ...]
    A_zz: float | tuple[float, ...] = DEFAULT_A_ZZ
    E_X_minus_E_Y: float = DEFAULT_ZFS_XY

    def __post_init__(self):
        rho = tuple(float(r) for r in self.rho)
        if isinstance(self.A_zz, (int, float)):
            a = (float(self.A_zz),) * len(rho)
        else:
            a = tuple(float(x) for x in self.A_zz)
        if len(a) != len(rho):
            raise DomainError(f"A_zz has {len(a)} entries but rho has {len(rho)}")
        if len(rho) > MAX_PROTONS:
            raise DomainError(f"enumeration is limited to {MAX_PROTONS} protons, got {len(rho)}")
        if not all(math.isfinite(x) for x in rho + a):
            raise DomainError("rho and A_zz must be finite")
        if not (self.E_X_minus_E_Y > 0 and math.isfinite(self.E_X_minus_E_Y)):
            raise DomainError("E_X_minus_E_Y must be positive")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "A_zz", a)
        object.__setattr__(self, "E_X_minus_E_Y", float(self.E_X_minus_E_Y))

    @property
    def n_protons(self) -> int:
        return len(self.rho)

    @property
    def couplings(self) -> np.ndarray:
        """rho_i * A_zz_i for every proton, MHz."""
        return np.array(self.rho) * np.array(self.A_zz)


@dataclass(frozen=True, eq=False)
class ShiftDistribution:
    shifts: np.ndarray
    n_protons: int

    def __post_init__(self):
        if len(self.shifts) != 1 << self.n_protons:
            raise DomainError(f"expected {1 << self.n_protons} shifts, got {len(self.shifts)}")

    def __len__(self):
        return len(self.shifts)


@dataclass(frozen=True, eq=False)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    rug: np.ndarray = field(repr=False)

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))


def gray_walk_sums(couplings: Sequence[float], start: int = 0, stop: int | None = None) -> np.ndarray:
    """Signed coupling sums for Gray-code indices ``start <= i < stop``.

    Configuration i has sign vector given by the bits of ``g = i ^ (i >> 1)``
    (bit set means -1). Successive codes differ in one bit, so each sum is
    the previous one plus a single +-2 a_j update. Disjoint ranges can be
    evaluated independently and concatenated.
    """
    a = np.asarray(couplings, dtype=float)
    P = len(a)
    total = 1 << P
    stop = total if stop is None else stop
    if not 0 <= start <= stop <= total:
        raise DomainError(f"invalid range [{start}, {stop}) for {total} configurations")
    if start == stop:
        return np.empty(0)

    g0 = start ^ (start >> 1)
    signs0 = 1.0 - 2.0 * ((g0 >> np.arange(P)) & 1)
    first = float(np.dot(signs0, a)) if P else 0.0
    if stop - start == 1:
        return np.array([first])

    i = np.arange(start + 1, stop, dtype=np.int64)
    lowbit = i & -i
    j = np.log2(lowbit.astype(float)).astype(np.int64)
    new_bit = ((i ^ (i >> 1)) >> j) & 1
    delta = np.where(new_bit == 1, -2.0 * a[j], 2.0 * a[j])
    return np.cumsum(np.concatenate(([first], delta)))


def enumerate_shifts(protons: ProtonSet) -> ShiftDistribution:
    """Transition shift (MHz) of every proton sign configuration."""
    a = protons.couplings
    total = 1 << protons.n_protons
    out = np.empty(total)
    # restart from an exact sum every chunk to bound round-off drift
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        s = gray_walk_sums(a, start, stop)
        out[start:stop] = (s * s) * 0.25 / protons.E_X_minus_E_Y
    # the all-aligned configurations can land an ulp above the bound because
    # the walk sums in a different order; the bound is the exact supremum
    np.minimum(out, max_shift_bound(protons), out=out)
    return ShiftDistribution(out, protons.n_protons)


def max_shift_bound(protons: ProtonSet) -> float:
    s = float(np.sum(np.abs(protons.couplings)))
    return s * s * 0.25 / protons.E_X_minus_E_Y


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    std = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    iqr = (q75 - q25) / 1.34
    spread = min(std, iqr) if iqr > 0 else std
    return 0.9 * spread * len(x) ** -0.2


def kde(
    dist: ShiftDistribution,
    bandwidth: float | str = "auto",
    n_points: int = 1000,
    pad: float = 4.0,
) -> KdeCurve:
    """Gaussian kernel density of the shifts on a uniform grid.

    The grid spans ``[min - pad*h, max + pad*h]``; with the default pad of
    four bandwidths less than 1e-4 of the mass falls outside it.
    """
    x = np.asarray(dist.shifts, dtype=float)
    if len(x) == 0:
        raise DomainError("no shifts to estimate a density from")
    # a kernel narrower than this cannot be resolved by a float grid around the data
    resolution = 1e-9 * float(np.max(np.abs(x)))
    if bandwidth == "auto" or bandwidth is None:
        h = silverman_bandwidth(x)
        if not h > resolution:
            raise DomainError("shifts have zero spread; supply an explicit bandwidth")
    else:
        h = float(bandwidth)
        if not (h > 0 and math.isfinite(h)):
            raise DomainError(f"bandwidth must be positive, got {bandwidth!r}")
        if not h > resolution:
            raise DomainError(f"bandwidth {h!r} is below the numerical resolution of the shifts")
    if n_points < 2:
        raise DomainError("n_points must be >= 2")

    grid = np.linspace(x.min() - pad * h, x.max() + pad * h, n_points)
    # identical shifts are frequent (sign-flip pairs): sum kernels over unique values
    values, counts = np.unique(x, return_counts=True)
    density = np.zeros(n_points)
    norm = 1.0 / (len(x) * h * math.sqrt(2.0 * math.pi))
    step = max(1, (1 << 22) // n_points)
    for k in range(0, len(values), step):
        u = (grid[:, None] - values[None, k:k + step]) / h
        density += np.exp(-0.5 * u * u) @ counts[k:k + step]
    return KdeCurve(grid=grid, density=density * norm, bandwidth=h, rug=x)


def histogram(dist: ShiftDistribution, bins: int = 1000) -> Spectrum:
    """Counts in ``bins`` uniform bins over [0, max shift], keyed by bin centre."""
    if bins < 2:
        raise DomainError("need at least 2 bins")
    x = np.asarray(dist.shifts, dtype=float)
    upper = float(x.max())
    if upper <= 0:
        # every shift is zero; give the axis a nominal width so it stays increasing
        upper = 1.0
    counts, edges = np.histogram(x, bins=bins, range=(0.0, upper))
    centers = 0.5 * (edges[:-1] + edges[1:])
    return Spectrum(centers, counts.astype(float), ValueKind.COUNT)
