"""Interference in phase space: where the zeros of |<k|alpha, n>|^2 come from.

Fock states are circles of radius sqrt(2m + 1) in dimensionless quadratures
(hbar = 1, one phase-space cell has area 2 pi). The analysis state |k> sits at
the origin, the prepared state |n> is displaced by sqrt(2)|alpha| along x.
The overlap picks up one contribution from each crossing point of the two
circles; their relative phase is the area B of the displaced orbit lying
outside the analysis orbit. The overlap behaves like cos(B/2 + offset), with a
single constant offset fixed once on the (n, k) = (1, 1) zero at |alpha| = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .fock import ppd_zero_locations


class ClassicallyForbidden(ValueError):
    """The two orbits do not intersect, so no interference phase is defined."""


@dataclass(frozen=True)
class PhaseSpaceBand:
    """Orbit of a Fock state: energy n + 1/2, centered at the origin or displaced by |alpha|."""

    n: int
    displacement: float = 0.0
    kind: str = "analysis"

    def __post_init__(self):
        if self.n < 0 or int(self.n) != self.n:
            raise ValueError("n must be a nonnegative integer")
        if self.kind not in ("analysis", "prepared"):
            raise ValueError("kind must be 'analysis' or 'prepared'")

    @property
    def center_energy_quanta(self) -> float:
        return self.n + 0.5

    @property
    def radius(self) -> float:
        return math.sqrt(2 * self.n + 1)

    @property
    def center(self) -> float:
        return math.sqrt(2.0) * self.displacement


def intersecting_range(n: int, k: int) -> tuple[float, float]:
    """Open interval of |alpha| over which the two orbits cross."""
    rn, rk = math.sqrt(2 * n + 1), math.sqrt(2 * k + 1)
    return abs(rn - rk) / math.sqrt(2.0), (rn + rk) / math.sqrt(2.0)


def _lens_area(r1, r2, d):
    c1 = np.clip((d * d + r1 * r1 - r2 * r2) / (2 * d * r1), -1.0, 1.0)
    c2 = np.clip((d * d + r2 * r2 - r1 * r1) / (2 * d * r2), -1.0, 1.0)
    kite = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)
    return r1 * r1 * np.arccos(c1) + r2 * r2 * np.arccos(c2) - 0.5 * np.sqrt(np.maximum(kite, 0.0))


def enclosed_area_phase(n: int, k: int, alpha_abs):
    """Area B (radians, hbar = 1) of the displaced |n> orbit outside the |k> orbit.

    Vectorized over ``alpha_abs``. Raises ``ClassicallyForbidden`` outside the
    intersecting range; B -> 0 as alpha -> 0 for n = k.
    """
    a = np.asarray(alpha_abs, dtype=float)
    lo, hi = intersecting_range(n, k)
    if np.any(a <= lo) or np.any(a >= hi):
        raise ClassicallyForbidden(
            f"orbits of n={n} and k={k} only cross for {lo:.4g} < |alpha| < {hi:.4g}")
    rn, rk = math.sqrt(2 * n + 1), math.sqrt(2 * k + 1)
    b = math.pi * rn * rn - _lens_area(rk, rn, math.sqrt(2.0) * a)
    b = np.maximum(b, 0.0)
    return float(b) if b.ndim == 0 else b


@lru_cache(maxsize=1)
def phase_offset() -> float:
    """Constant added to B/2, set so the (1, 1) prediction falls on |alpha| = 1."""
    return 0.5 * math.pi - 0.5 * enclosed_area_phase(1, 1, 1.0)


def semiclassical_amplitude(n: int, k: int, alpha_abs):
    """cos(B/2 + offset): the sign structure of <k|alpha, n>, not its magnitude."""
    return np.cos(0.5 * np.asarray(enclosed_area_phase(n, k, alpha_abs)) + phase_offset())


def predict_minima(n: int, k: int, alpha_range=None, grid: int = 2000) -> list[float]:
    """|alpha| where cos(B/2 + offset) changes sign inside ``alpha_range``.

    The range defaults to the whole intersecting regime; it is clipped to it.
    """
    lo, hi = intersecting_range(n, k)
    if alpha_range is not None:
        lo, hi = max(lo, alpha_range[0]), min(hi, alpha_range[1])
    if not lo < hi:
        return []
    eps = 1e-9 * (hi - lo)
    a = np.linspace(lo + eps, hi - eps, grid)
    c = semiclassical_amplitude(n, k, a)
    out = []
    for i in np.nonzero(np.sign(c[:-1]) * np.sign(c[1:]) < 0)[0]:
        out.append(float(brentq(lambda x: semiclassical_amplitude(n, k, x), a[i], a[i + 1],
                                xtol=1e-13)))
    return out


def exact_minima(n: int, k: int) -> list[float]:
    """|alpha| of the exact zeros of p_k for preparation n."""
    return [float(np.sqrt(x)) for x in ppd_zero_locations(n, k)]


def minima_table(pairs, alpha_range=None):
    """Rows (n, k, alpha_semiclassical, alpha_exact, relative_error), matched in order.

    Each semiclassical minimum is paired with the nearest exact zero.
    """
    rows = []
    for n, k in pairs:
        exact = exact_minima(n, k)
        for a_sc in predict_minima(n, k, alpha_range):
            if exact:
                a_ex = min(exact, key=lambda e: abs(e - a_sc))
                rows.append((n, k, a_sc, a_ex, abs(a_sc - a_ex) / a_ex))
            else:
                rows.append((n, k, a_sc, math.nan, math.nan))
    return rows
