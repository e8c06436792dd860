"""Reference values: the continuous jump operator and manufactured solutions.

The continuous operator is evaluated in split form,

    J phi(x) = int_{|z|<=1} z^2 Q(x, z) nu(dz) + int_{|z|>1} (phi(x+z) - phi(x)) nu(dz),
    Q(x, z)  = int_0^1 (1 - theta) phi''(x + theta z) dtheta,

with ``Q = (phi(x+z) - phi(x) - z phi'(x)) / z^2`` away from the origin and a
Gauss-Legendre rule in ``theta`` close to it (where the closed form cancels).
The outer ``z`` integrals use adaptive quadrature with an algebraic endpoint
weight for infinite-activity densities.

Manufactured solutions are separable, ``u(t, x) = g(t) phi(x)`` with ``phi``
compactly supported, so ``J u_t = g(t) J phi`` needs quadrature only once per
grid point.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .integrator import ProblemSpec
from .levy import LEFT, RIGHT, LevyMeasure, global_moments
from .operators import CoefficientSet

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_THETA = (_GL_NODES + 1) / 2
_THETA_W = _GL_WEIGHTS / 2 * (1 - _THETA)
_SMALL_Z = 0.05


class Shape(ABC):
    """Spatial profile with analytic first and second derivatives."""

    radius: float = math.inf
    smoothness: float = math.inf

    @abstractmethod
    def value(self, x): ...

    @abstractmethod
    def d1(self, x): ...

    @abstractmethod
    def d2(self, x): ...


def _inside(x, r):
    x = np.asarray(x, dtype=float)
    s = x / r
    return x, s, np.abs(s) < 1


@dataclass(frozen=True)
class Bump(Shape):
    """``exp(k - k/(1 - (x/r)^2))`` on ``|x| < r``; C-infinity with compact support.

    ``sharpness`` ``k`` trades the width of the central hump (roughly a
    Gaussian of scale ``r/sqrt(k)``) against how small the steep tails are.
    """

    radius: float = 1.0
    sharpness: float = 1.0
    smoothness = math.inf

    def _parts(self, x):
        x, s, inside = _inside(x, self.radius)
        q = np.where(inside, 1 - s * s, 1.0)
        phi = np.where(inside, np.exp(self.sharpness - self.sharpness / q), 0.0)
        return s, q, phi, inside

    def value(self, x):
        return self._parts(x)[2]

    def d1(self, x):
        s, q, phi, _ = self._parts(x)
        return phi * (-2 * self.sharpness * s / (self.radius * q * q))

    def d2(self, x):
        s, q, phi, _ = self._parts(x)
        r, k = self.radius, self.sharpness
        g = -2 * k * s / (r * q * q)
        dg = -k * (2 / (r * r * q * q) + 8 * s * s / (r * r * q**3))
        return phi * (g * g + dg)


@dataclass(frozen=True)
class PolyBump(Shape):
    """``(1 - (x/r)^2)^p`` on ``|x| < r``; of class ``C^(p-1)``."""

    radius: float = 1.0
    power: int = 6

    @property
    def smoothness(self) -> float:
        return self.power - 1

    def value(self, x):
        _, s, inside = _inside(x, self.radius)
        return np.where(inside, (1 - s * s) ** self.power, 0.0)

    def d1(self, x):
        _, s, inside = _inside(x, self.radius)
        p, r = self.power, self.radius
        return np.where(inside, p * (1 - s * s) ** (p - 1) * (-2 * s / r), 0.0)

    def d2(self, x):
        _, s, inside = _inside(x, self.radius)
        p, r = self.power, self.radius
        q = 1 - s * s
        return np.where(inside, p * (p - 1) * q ** (p - 2) * 4 * s * s / r**2 - 2 * p * q ** (p - 1) / r**2, 0.0)


@dataclass(frozen=True)
class Polynomial(Shape):
    """``sum_j coeffs[j] x^j`` on the whole line (for exactness checks)."""

    coeffs: tuple[float, ...] = (0.0, 1.0)

    def _poly(self, order):
        return np.polynomial.Polynomial(self.coeffs).deriv(order) if order else np.polynomial.Polynomial(self.coeffs)

    def value(self, x):
        return self._poly(0)(np.asarray(x, dtype=float))

    def d1(self, x):
        return self._poly(1)(np.asarray(x, dtype=float))

    def d2(self, x):
        return self._poly(2)(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Scaled(Shape):
    base: Shape
    factor: float

    @property
    def radius(self):
        return self.base.radius

    @property
    def smoothness(self):
        return self.base.smoothness

    def value(self, x):
        return self.factor * self.base.value(x)

    def d1(self, x):
        return self.factor * self.base.d1(x)

    def d2(self, x):
        return self.factor * self.base.d2(x)


TIME_FACTORS = {
    "const": (lambda t: 1.0, lambda t: 0.0),
    "exp": (lambda t: math.exp(-t), lambda t: -math.exp(-t)),
    "cos": (math.cos, lambda t: -math.sin(t)),
}


@dataclass(frozen=True)
class SmoothProfile:
    """Separable exact solution ``u(t, x) = g(t) phi(x)``."""

    shape: Shape
    time_factor: str = "const"

    def __post_init__(self):
        if self.time_factor not in TIME_FACTORS:
            raise ValueError(f"unknown time factor {self.time_factor!r}; choose from {sorted(TIME_FACTORS)}")

    @property
    def radius(self) -> float:
        return self.shape.radius

    @property
    def smoothness(self) -> float:
        return self.shape.smoothness

    def g(self, t: float) -> float:
        return TIME_FACTORS[self.time_factor][0](t)

    def dg(self, t: float) -> float:
        return TIME_FACTORS[self.time_factor][1](t)

    def u(self, t, x):
        return self.g(t) * self.shape.value(x)

    def u_t(self, t, x):
        return self.dg(t) * self.shape.value(x)

    def u_x(self, t, x):
        return self.g(t) * self.shape.d1(x)

    def u_xx(self, t, x):
        return self.g(t) * self.shape.d2(x)

    def at(self, t: float) -> Shape:
        return Scaled(self.shape, self.g(t))


def make_profile(shape: str = "bump", radius: float = 1.0, power: int = 6, time_factor: str = "const",
                 sharpness: float = 1.0) -> SmoothProfile:
    if shape == "bump":
        base = Bump(radius, sharpness)
    elif shape in ("poly", "polynomial_bump"):
        base = PolyBump(radius, power)
    else:
        raise ValueError(f"unknown profile shape {shape!r}")
    return SmoothProfile(base, time_factor)


def builtin_profiles() -> dict[str, SmoothProfile]:
    out = {}
    for tf in TIME_FACTORS:
        suffix = "" if tf == "const" else f"-{tf}"
        out[f"bump{suffix}"] = make_profile("bump", 1.0, time_factor=tf)
        out[f"poly{suffix}"] = make_profile("poly", 1.0, 6, time_factor=tf)
        out[f"wide-bump{suffix}"] = make_profile("bump", 5.0, time_factor=tf, sharpness=4.0)
    return out


# -- continuous operator ---------------------------------------------------


@lru_cache(maxsize=64)
def _mu0(measure: LevyMeasure) -> float:
    return global_moments(measure)[0]


def continuous_J(shape: Shape, x: float, measure: LevyMeasure, quad_tol: float = 1e-10) -> float:
    """``J phi(x)`` for a shape with analytic derivatives, by adaptive quadrature."""
    x = float(x)
    phi0 = float(shape.value(x))
    dphi0 = float(shape.d1(x))

    def taylor_remainder(z: float) -> float:
        if abs(z) >= _SMALL_Z:
            return (float(shape.value(x + z)) - phi0 - z * dphi0) / (z * z)
        return float(np.dot(_THETA_W, shape.d2(x + _THETA * z)))

    small = (measure.integrate_z2(taylor_remainder, 0.0, 1.0, RIGHT, epsabs=quad_tol / 4)
             + measure.integrate_z2(taylor_remainder, -1.0, 0.0, LEFT, epsabs=quad_tol / 4))

    def shifted(z: float) -> float:
        return float(shape.value(x + z))

    # phi(x + z) vanishes unless x + z lies in the support of phi
    r = shape.radius
    upper = min(r - x, math.inf)
    lower = max(-r - x, -math.inf)
    gain = 0.0
    if upper > 1.0:
        gain += measure.integrate(shifted, 1.0, upper, RIGHT, epsabs=quad_tol / 4)
    if lower < -1.0:
        gain += measure.integrate(shifted, lower, -1.0, LEFT, epsabs=quad_tol / 4)
    return small + gain - _mu0(measure) * phi0


def continuous_J_values(shape: Shape, xs, measure: LevyMeasure, quad_tol: float = 1e-10) -> np.ndarray:
    return np.array([continuous_J(shape, x, measure, quad_tol) for x in np.asarray(xs, dtype=float)])


# -- manufactured problems ------------------------------------------------


@dataclass
class ManufacturedProblem:
    """Forcing ``f = u_t - L_t u - J u`` that makes ``profile`` an exact solution."""

    profile: SmoothProfile
    coeffs: CoefficientSet
    measure: LevyMeasure
    quad_tol: float = 1e-10
    _jump_cache: dict = field(default_factory=dict, repr=False)
    _array_cache: dict = field(default_factory=dict, repr=False)

    def exact(self, t: float, x) -> np.ndarray:
        return self.profile.u(t, x)

    def jump_values(self, x) -> np.ndarray:
        """``J phi`` at the points ``x`` (cached per point)."""
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if key in self._array_cache:
            return self._array_cache[key]
        values = np.empty_like(x)
        for i, xi in enumerate(x.flat):
            xi = float(xi)
            if xi not in self._jump_cache:
                self._jump_cache[xi] = continuous_J(self.profile.shape, xi, self.measure, self.quad_tol)
            values.flat[i] = self._jump_cache[xi]
        self._array_cache[key] = values
        return values

    def forcing(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a, b, c = self.coeffs.evaluate(t, x)
        shape = self.profile.shape
        g = self.profile.g(t)
        local = a * shape.d2(x) + b * shape.d1(x) + c * shape.value(x)
        return self.profile.dg(t) * shape.value(x) - g * (local + self.jump_values(x))

    def to_problem(self, T: float, gamma: float | None = None) -> ProblemSpec:
        return ProblemSpec(
            coeffs=self.coeffs,
            initial=lambda x: self.profile.u(0.0, x),
            T=T,
            forcing=self.forcing,
            gamma=self.coeffs.gamma if gamma is None else gamma,
        )


def manufactured_rhs(problem: ManufacturedProblem, t: float, x: float) -> float:
    """Pointwise forcing ``u_t - a u_xx - b u_x - c u - J u`` at ``(t, x)``."""
    xa = np.array([float(x)])
    a, b, c = problem.coeffs.evaluate(t, xa)
    p = problem.profile
    local = a[0] * p.u_xx(t, x) + b[0] * p.u_x(t, x) + c[0] * p.u(t, x)
    jump = p.g(t) * continuous_J(p.shape, x, problem.measure, problem.quad_tol)
    return float(p.u_t(t, x) - local - jump)
