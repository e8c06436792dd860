"""Lévy measures on the real line and the cell quantities built from them.

For spacing ``h = 1/n`` the real line minus the origin is tiled by the cells

    B_k = ((k-1)h, kh]   for k >= 1,
    B_k = [kh, (k+1)h)   for k <= -1,

and the discrete jump operator is parameterized by the cell masses
``nu(B_k)`` (used outside the unit ball) and the cell second moments
``zeta_k = int_{B_k} z^2 nu(dz)`` (used inside it).

Four families are provided: a symmetric power law ``c |z|^(-2-alpha)``, its
exponentially tempered variant, a compound Poisson measure with bounded
density on a finite interval, and finite sums of atoms. Closed forms are used
where they exist; the remaining integrals go through adaptive quadrature with
relative tolerance ``1e-10`` and absolute floor ``1e-14``.
"""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import InvalidCellError, InvalidMeasureError, QuadratureError, TailTruncationError
from .grid import spacing_denominator

REL_TOL = 1e-10
ABS_TOL = 1e-14

# Closure conventions for one-signed intervals: cells with k >= 1 are
# right-closed, cells with k <= -1 are left-closed.
RIGHT = "right"
LEFT = "left"


def quad(f: Callable[[float], float], a: float, b: float, *, epsabs: float = ABS_TOL,
         epsrel: float = REL_TOL, **kwargs) -> float:
    """``scipy.integrate.quad`` that raises :class:`QuadratureError` on failure."""
    if a == b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        res = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=400, full_output=1, **kwargs)
    value, abserr = res[0], res[1]
    target = max(epsabs, epsrel * abs(value))
    if len(res) > 3 and abserr > target:
        achieved = abserr / abs(value) if value else abserr
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge", achieved, epsrel)
    return value


def _pow_diff(lo: float, hi: float, p: float) -> float:
    """``lo**p - hi**p`` for ``0 < lo < hi`` without cancellation."""
    if math.isinf(hi):
        return lo**p if p < 0 else -math.inf
    return -(lo**p) * math.expm1(p * math.log1p((hi - lo) / lo))


class LevyMeasure(ABC):
    """A Borel measure on ``R \\ {0}`` integrating ``1 ∧ z²``.

    Interval queries are always one-signed (``0 <= lo < hi`` or
    ``lo < hi <= 0``); ``closed`` says which endpoint belongs to the set and
    only matters for atoms.
    """

    family: str = "abstract"

    @abstractmethod
    def mass(self, lo: float, hi: float, closed: str = RIGHT) -> float: ...

    @abstractmethod
    def moment2(self, lo: float, hi: float, closed: str = RIGHT) -> float: ...

    @abstractmethod
    def tail_mass(self, r: float) -> float:
        """``nu({|z| > r})`` for ``r > 0``."""

    @abstractmethod
    def integrate(self, g: Callable[[float], float], lo: float, hi: float, closed: str = RIGHT,
                  epsabs: float = ABS_TOL) -> float:
        """``int g(z) nu(dz)`` over a one-signed interval bounded away from 0."""

    @abstractmethod
    def integrate_z2(self, g: Callable[[float], float], lo: float, hi: float, closed: str = RIGHT,
                     epsabs: float = ABS_TOL) -> float:
        """``int g(z) z^2 nu(dz)`` over a one-signed interval (may touch 0)."""

    @property
    def support_radius(self) -> float:
        return math.inf

    @property
    def is_symmetric(self) -> bool:
        return False

    @abstractmethod
    def to_dict(self) -> dict: ...


class DensityMeasure(LevyMeasure):
    """Measure with a density; subclasses override with closed forms.

    ``singularity`` is the exponent ``alpha`` when the density behaves like
    ``|z|^(-2-alpha) * regular(z)`` near the origin, or ``None`` for a bounded
    density. ``support`` bounds the density.
    """

    singularity: float | None = None

    @abstractmethod
    def density(self, z: float) -> float: ...

    def regular(self, z: float) -> float:
        return self.density(z) * abs(z) ** (2 + self.singularity)

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    @property
    def support_radius(self) -> float:
        lo, hi = self.support
        return max(abs(lo), abs(hi))

    def _clip(self, lo: float, hi: float) -> tuple[float, float]:
        s_lo, s_hi = self.support
        return max(lo, s_lo), min(hi, s_hi)

    def integrate(self, g, lo, hi, closed=RIGHT, epsabs=ABS_TOL):
        a, b = self._clip(lo, hi)
        if a >= b:
            return 0.0
        return quad(lambda z: g(z) * self.density(z), a, b, epsabs=epsabs)

    def integrate_z2(self, g, lo, hi, closed=RIGHT, epsabs=ABS_TOL):
        a, b = self._clip(lo, hi)
        if a >= b:
            return 0.0
        alpha = self.singularity
        if alpha is not None and a == 0.0:
            # z^2 * density = z^(-alpha) * regular(z): algebraic endpoint weight
            return quad(lambda z: g(z) * self.regular(z), 0.0, b, weight="alg", wvar=(-alpha, 0.0),
                        epsabs=epsabs)
        if alpha is not None and b == 0.0:
            return quad(lambda w: g(-w) * self.regular(-w), 0.0, -a, weight="alg", wvar=(-alpha, 0.0),
                        epsabs=epsabs)
        return quad(lambda z: g(z) * z * z * self.density(z), a, b, epsabs=epsabs)

    def mass(self, lo, hi, closed=RIGHT):
        a, b = self._clip(lo, hi)
        if a >= b:
            return 0.0
        if self.singularity is not None and (a == 0.0 or b == 0.0):
            return math.inf
        return quad(self.density, a, b)

    def moment2(self, lo, hi, closed=RIGHT):
        return self.integrate_z2(lambda z: 1.0, lo, hi, closed)

    def tail_mass(self, r):
        a, b = self.support
        total = 0.0
        if b > r:
            total += quad(self.density, max(r, a), b)
        if a < -r:
            total += quad(self.density, a, min(-r, b))
        return total


@dataclass(frozen=True)
class PowerLaw(DensityMeasure):
    """Symmetric infinite-activity density ``c |z|^(-2-alpha)``, ``alpha`` in (0, 1)."""

    alpha: float = 0.5
    c: float = 1.0
    family = "power_law"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidMeasureError(f"power-law alpha must lie in (0, 1), got {self.alpha}")
        if not self.c > 0:
            raise InvalidMeasureError(f"power-law scale must be positive, got {self.c}")

    @property
    def singularity(self) -> float:
        return self.alpha

    @property
    def is_symmetric(self) -> bool:
        return True

    def density(self, z):
        return self.c * abs(z) ** (-2.0 - self.alpha)

    def regular(self, z):
        return self.c

    @staticmethod
    def _abs_interval(lo, hi):
        return (lo, hi) if lo >= 0 else (-hi, -lo)

    def mass(self, lo, hi, closed=RIGHT):
        a, b = self._abs_interval(lo, hi)
        if a == 0.0:
            return math.inf
        return self.c / (1 + self.alpha) * _pow_diff(a, b, -1.0 - self.alpha)

    def moment2(self, lo, hi, closed=RIGHT):
        a, b = self._abs_interval(lo, hi)
        p = 1.0 - self.alpha
        if a == 0.0:
            return self.c / p * b**p
        return -self.c / p * _pow_diff(a, b, p)

    def tail_mass(self, r):
        return 2 * self.c / (1 + self.alpha) * r ** (-1.0 - self.alpha)

    def to_dict(self):
        return {"family": self.family, "alpha": self.alpha, "c": self.c}


@dataclass(frozen=True)
class TemperedPowerLaw(DensityMeasure):
    """Symmetric density ``c |z|^(-2-alpha) exp(-lam |z|)``; ``lam = 0`` is the pure power law."""

    alpha: float = 0.5
    c: float = 1.0
    lam: float = 1.0
    family = "tempered"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidMeasureError(f"tempered alpha must lie in (0, 1), got {self.alpha}")
        if not self.c > 0 or not self.lam >= 0:
            raise InvalidMeasureError("tempered measure needs c > 0 and lam >= 0")

    @property
    def singularity(self) -> float:
        return self.alpha

    @property
    def is_symmetric(self) -> bool:
        return True

    def density(self, z):
        a = abs(z)
        return self.c * a ** (-2.0 - self.alpha) * math.exp(-self.lam * a)

    def regular(self, z):
        return self.c * math.exp(-self.lam * abs(z))

    def to_dict(self):
        return {"family": self.family, "alpha": self.alpha, "c": self.c, "lam": self.lam}


@dataclass(frozen=True)
class CompoundPoisson(DensityMeasure):
    """Finite measure ``rate * p(z) dz`` with ``p`` a bounded density on ``[lo, hi]``.

    Without ``density`` the jump law is uniform and everything is closed form;
    a user ``density`` (already normalized) is integrated numerically.
    """

    rate: float = 1.0
    lo: float = -1.0
    hi: float = 1.0
    jump_density: Callable[[float], float] | None = field(default=None, compare=False)
    family = "compound_poisson"

    def __post_init__(self):
        if not self.rate >= 0 or not self.lo < self.hi:
            raise InvalidMeasureError("compound Poisson needs rate >= 0 and lo < hi")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise InvalidMeasureError("compound Poisson support must be bounded")

    @property
    def support(self):
        return (self.lo, self.hi)

    @property
    def is_symmetric(self) -> bool:
        return self.jump_density is None and self.lo == -self.hi

    def density(self, z):
        if not self.lo <= z <= self.hi:
            return 0.0
        if self.jump_density is None:
            return self.rate / (self.hi - self.lo)
        return self.rate * self.jump_density(z)

    def mass(self, lo, hi, closed=RIGHT):
        if self.jump_density is not None:
            return super().mass(lo, hi, closed)
        a, b = self._clip(lo, hi)
        return self.rate * max(b - a, 0.0) / (self.hi - self.lo)

    def moment2(self, lo, hi, closed=RIGHT):
        if self.jump_density is not None:
            return super().moment2(lo, hi, closed)
        a, b = self._clip(lo, hi)
        if a >= b:
            return 0.0
        return self.rate / (self.hi - self.lo) * (b**3 - a**3) / 3.0

    def tail_mass(self, r):
        if self.jump_density is not None:
            return super().tail_mass(r)
        width = max(self.hi - max(r, self.lo), 0.0) + max(min(-r, self.hi) - self.lo, 0.0)
        return self.rate * width / (self.hi - self.lo)

    def to_dict(self):
        out = {"family": self.family, "rate": self.rate, "lo": self.lo, "hi": self.hi}
        if self.jump_density is not None:
            out["density"] = getattr(self.jump_density, "__name__", "custom")
        return out


def _in_interval(z: float, lo: float, hi: float, closed: str) -> bool:
    if closed == RIGHT:
        return lo < z <= hi
    return lo <= z < hi


@dataclass(frozen=True)
class AtomicMeasure(LevyMeasure):
    """Finite sum of point masses ``sum_j m_j delta_{z_j}`` with ``z_j != 0``."""

    atoms: tuple[tuple[float, float], ...] = ()
    family = "atomic"

    def __post_init__(self):
        atoms = tuple((float(z), float(m)) for z, m in self.atoms)
        for z, m in atoms:
            if z == 0.0:
                raise InvalidMeasureError("a Lévy measure cannot charge the origin")
            if not (math.isfinite(z) and m > 0 and math.isfinite(m)):
                raise InvalidMeasureError(f"invalid atom ({z}, {m})")
        object.__setattr__(self, "atoms", atoms)

    @property
    def support_radius(self) -> float:
        return max((abs(z) for z, _ in self.atoms), default=0.0)

    @property
    def is_symmetric(self) -> bool:
        return sorted(self.atoms) == sorted((-z, m) for z, m in self.atoms)

    def mass(self, lo, hi, closed=RIGHT):
        return math.fsum(m for z, m in self.atoms if _in_interval(z, lo, hi, closed))

    def moment2(self, lo, hi, closed=RIGHT):
        return math.fsum(m * z * z for z, m in self.atoms if _in_interval(z, lo, hi, closed))

    def tail_mass(self, r):
        return math.fsum(m for z, m in self.atoms if abs(z) > r)

    def integrate(self, g, lo, hi, closed=RIGHT, epsabs=ABS_TOL):
        return math.fsum(m * g(z) for z, m in self.atoms if _in_interval(z, lo, hi, closed))

    def integrate_z2(self, g, lo, hi, closed=RIGHT, epsabs=ABS_TOL):
        return math.fsum(m * z * z * g(z) for z, m in self.atoms if _in_interval(z, lo, hi, closed))

    def to_dict(self):
        return {"family": self.family, "atoms": [list(a) for a in self.atoms]}


def zero_measure() -> AtomicMeasure:
    return AtomicMeasure(())


def make_measure(family: str, **params) -> LevyMeasure:
    """Build a measure from a family name and its parameters (config entry point)."""
    family = family.replace("-", "_").lower()
    if family in ("power_law", "powerlaw"):
        return PowerLaw(**params)
    if family in ("tempered", "tempered_power_law", "cgmy"):
        return TemperedPowerLaw(**params)
    if family in ("compound_poisson", "poisson"):
        return CompoundPoisson(**params)
    if family in ("atomic", "atoms"):
        return AtomicMeasure(tuple(tuple(a) for a in params.get("atoms", ())))
    if family in ("zero", "none"):
        return zero_measure()
    raise InvalidMeasureError(f"unknown measure family {family!r}")


# -- cell quantities ------------------------------------------------------


def cell_bounds(k: int, h: float) -> tuple[float, float, str]:
    """Bounds ``(lo, hi, closed)`` of the cell ``B_k`` for spacing ``h = 1/n``."""
    if k == 0 or int(k) != k:
        raise InvalidCellError(f"cell index must be a nonzero integer, got {k!r}")
    n = spacing_denominator(h)
    k = int(k)
    if k > 0:
        return (k - 1) / n, k / n, RIGHT
    return k / n, (k + 1) / n, LEFT


def _atomic_cell(measure: AtomicMeasure, k: int, n: int):
    # Exact rational membership so atoms on cell boundaries follow the
    # half-open convention regardless of float rounding of k/n.
    for z, m in measure.atoms:
        q = Fraction(z) * n
        j = math.ceil(q) if q > 0 else math.floor(q)
        if j == k:
            yield z, m


def cell_mass(measure: LevyMeasure, k: int, h: float) -> float:
    """``nu(B_k)``; infinite only for ``|k| = 1`` under infinite activity."""
    lo, hi, closed = cell_bounds(k, h)
    if isinstance(measure, AtomicMeasure):
        return math.fsum(m for _, m in _atomic_cell(measure, int(k), spacing_denominator(h)))
    return measure.mass(lo, hi, closed)


def cell_second_moment(measure: LevyMeasure, k: int, h: float) -> float:
    """``zeta_k = int_{B_k} z^2 nu(dz)``."""
    lo, hi, closed = cell_bounds(k, h)
    if isinstance(measure, AtomicMeasure):
        return math.fsum(m * z * z for z, m in _atomic_cell(measure, int(k), spacing_denominator(h)))
    return measure.moment2(lo, hi, closed)


def global_moments(measure: LevyMeasure) -> tuple[float, float]:
    """``(mu0, mu2)``: mass outside ``[-1, 1]`` and second moment inside it."""
    mu0 = measure.tail_mass(1.0)
    mu2 = measure.moment2(-1.0, 0.0, LEFT) + measure.moment2(0.0, 1.0, RIGHT)
    return mu0, mu2


def tail_truncation_index(measure: LevyMeasure, h: float, eps_tail: float, max_index: int = 10**7) -> int:
    """Smallest ``K >= 1/h`` with ``nu(|z| > K h) <= eps_tail``.

    Raises :class:`TailTruncationError` when ``max_index`` is reached first.
    """
    if not eps_tail > 0:
        raise ValueError("eps_tail must be positive")
    n = spacing_denominator(h)

    def tail(K: int) -> float:
        return measure.tail_mass(K / n)

    if tail(n) <= eps_tail:
        return n
    lo, hi = n, 2 * n
    while tail(hi) > eps_tail:
        if hi >= max_index:
            raise TailTruncationError("tail tolerance not met before the index cap", tail(max_index), max_index)
        lo, hi = hi, min(2 * hi, max_index)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail(mid) <= eps_tail:
            hi = mid
        else:
            lo = mid
    return hi


def cell_table(measure: LevyMeasure, h: float, k_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Second moments on ``|k| <= 1/h`` and masses on ``1/h < |k| <= k_max``.

    Returns ``(inner_k, zeta, outer_k, masses)`` with indices in increasing order.
    """
    n = spacing_denominator(h)
    inner_k = np.array([k for k in range(-n, n + 1) if k != 0])
    zeta = np.array([cell_second_moment(measure, int(k), h) for k in inner_k])
    outer_k = np.array([k for k in range(-k_max, k_max + 1) if abs(k) > n], dtype=int)
    masses = np.array([cell_mass(measure, int(k), h) for k in outer_k])
    return inner_k, zeta, outer_k, masses
