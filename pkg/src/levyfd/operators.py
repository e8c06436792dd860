"""Discrete jump operator ``J^h = J^h_1 + J^h_2`` and the local operator ``L^h_t``.

Inside the unit ball the jump operator is a weighted sum of second
differences,

    J1 phi(x) = sum_{0<|k|<=n} zeta_k sum_{l=0}^{|k|-1} theta_k^l  d2 phi(x + s_k l h),
    theta_k^l = (2|k| - (2l + 1)) / (2 k^2),

and for ``k >= 1`` the inner sum telescopes to a four-point stencil

    (phi(x+kh) + phi(x+(k-1)h) + (2k-1) phi(x-h) - (2k+1) phi(x)) / (2 k^2 h^2)

(mirrored for ``k <= -1``). The production path uses the four-point form; the
literal double sum is kept in :func:`apply_J1_direct` as an oracle.

Outside the unit ball, ``J2 phi(x) = sum_k (phi(x+kh) - phi(x)) nu(B_k)``. The
gain terms are kept for ``n < |k| <= k_max``; the loss term uses the full mass
``mu0 = nu(|z| > 1)``. With zero extension and ``k_max`` at least the window
width this is the whole-line operator applied to the zero-extended function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import CoefficientError, SpacingMismatchError
from .grid import GridFunction, GridSpec, delta_sym, second_diff_wide, shift, spacing_denominator
from .levy import LevyMeasure, cell_second_moment, cell_table, global_moments


def theta_weight(k: int, l: int) -> Fraction:
    """``int_{l/|k|}^{(l+1)/|k|} (1 - theta) dtheta`` as an exact fraction."""
    a = abs(k)
    return Fraction(2 * a - (2 * l + 1), 2 * a * a)


def collapsed_stencil(k: int) -> list[tuple[int, int]]:
    """Offsets and integer weights of the four-point form, scaled by ``2 k^2 h^2``."""
    a = abs(k)
    s = 1 if k > 0 else -1
    return [(s * a, 1), (s * (a - 1), 1), (-s, 2 * a - 1), (0, -(2 * a + 1))]


@dataclass(frozen=True, eq=False)
class StencilWeights:
    """Cell data for one spacing ``h = 1/n``.

    ``inner_k``/``zeta`` cover ``0 < |k| <= n``; ``outer_k``/``masses`` cover
    ``n < |k| <= k_max``. ``mu0`` is the loss coefficient on the diagonal and
    ``truncated_mass`` the part of it whose gain terms were dropped.
    """

    n: int
    k_max: int
    inner_k: np.ndarray
    zeta: np.ndarray
    outer_k: np.ndarray
    masses: np.ndarray
    mu0: float
    mu2: float

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def truncated_mass(self) -> float:
        return max(self.mu0 - float(np.sum(self.masses)), 0.0)

    def stencil(self) -> dict[int, float]:
        """Combined ``J^h`` stencil: offset -> coefficient."""
        out: dict[int, float] = {}
        h2 = self.h**2
        for k, z in zip(self.inner_k, self.zeta):
            if z == 0.0:
                continue
            scale = z / (2 * int(k) ** 2 * h2)
            for off, w in collapsed_stencil(int(k)):
                out[off] = out.get(off, 0.0) + scale * w
        for k, m in zip(self.outer_k, self.masses):
            if m != 0.0:
                out[int(k)] = out.get(int(k), 0.0) + m
        out[0] = out.get(0, 0.0) - self.mu0
        return out


def build_weights(measure: LevyMeasure, h: float, k_max: int) -> StencilWeights:
    n = spacing_denominator(h)
    k_max = max(int(k_max), n)
    inner_k, zeta, outer_k, masses = cell_table(measure, h, k_max)
    mu0, mu2 = global_moments(measure)
    return StencilWeights(n, k_max, inner_k, zeta, outer_k, masses, mu0, mu2)


def _check_spacing(phi: GridFunction, weights: StencilWeights):
    if phi.spec.n != weights.n:
        raise SpacingMismatchError(f"grid spacing 1/{phi.spec.n} does not match weights built for 1/{weights.n}")


def apply_J1(phi: GridFunction, weights: StencilWeights) -> GridFunction:
    """Four-point form of ``J^h_1``; accumulated in extended precision.

    The weights scale like ``h^-2``, so float64 accumulation alone loses
    about three digits at ``h = 1/32``.
    """
    _check_spacing(phi, weights)
    v = phi.values.astype(np.longdouble)
    h2 = np.longdouble(phi.h) ** 2
    out = np.zeros_like(v)
    for k, z in zip(weights.inner_k, weights.zeta):
        if z == 0.0:
            continue
        a = abs(int(k))
        inner = np.zeros_like(v)
        for off, w in collapsed_stencil(int(k)):
            inner += w * shift(v, off)
        out += (np.longdouble(z) / (2 * a * a * h2)) * inner
    return GridFunction(phi.spec, out.astype(float))


def apply_J1_direct(phi: GridFunction, measure: LevyMeasure) -> GridFunction:
    """Literal double sum over cells and theta weights (test oracle)."""
    n = phi.spec.n
    size = phi.spec.size
    h2 = np.longdouble(phi.h) ** 2
    # zero-extended copy wide enough for every offset s*l +- 1 with |l| < n
    pad = n + 1
    v = np.zeros(size + 2 * pad, dtype=np.longdouble)
    v[pad:pad + size] = phi.values
    d2 = np.zeros_like(v)
    d2[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h2
    out = np.zeros(size, dtype=np.longdouble)
    for k in range(-n, n + 1):
        if k == 0:
            continue
        zeta = cell_second_moment(measure, k, phi.h)
        if zeta == 0.0:
            continue
        s = 1 if k > 0 else -1
        for l in range(abs(k)):
            theta = theta_weight(k, l)
            weight = np.longdouble(zeta) * np.longdouble(theta.numerator) / np.longdouble(theta.denominator)
            o = pad + s * l
            out += weight * d2[o:o + size]
    return GridFunction(phi.spec, out.astype(float))


def apply_J2(phi: GridFunction, weights: StencilWeights) -> GridFunction:
    _check_spacing(phi, weights)
    out = -weights.mu0 * phi.values
    for k, m in zip(weights.outer_k, weights.masses):
        if m != 0.0:
            out = out + m * phi.shifted(int(k))
    return GridFunction(phi.spec, out)


def apply_J(phi: GridFunction, weights: StencilWeights) -> GridFunction:
    return apply_J1(phi, weights) + apply_J2(phi, weights)


# -- local operator -------------------------------------------------------


def _constant(value: float) -> Callable:
    def coefficient(t, x):
        return np.full(np.shape(x), float(value))

    coefficient.__name__ = f"const({value})"
    return coefficient


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients ``a, b, c`` of ``L_t = a d_xx + b d_x + c``, each ``f(t, x_array)``.

    ``bound`` is the magnitude bound ``K`` checked on every evaluation (skipped
    when ``None``). ``gamma`` and ``holder_const`` describe the time regularity
    ``|a_t - a_s|^2 + ... <= C |t - s|^gamma`` (squared differences, so a
    Lipschitz coefficient has ``gamma = 2``).
    """

    a: Callable = field(default_factory=lambda: _constant(0.0))
    b: Callable = field(default_factory=lambda: _constant(0.0))
    c: Callable = field(default_factory=lambda: _constant(0.0))
    bound: float | None = None
    gamma: float = 2.0
    holder_const: float | None = None

    @classmethod
    def constant(cls, a: float = 0.0, b: float = 0.0, c: float = 0.0, **kwargs) -> CoefficientSet:
        return cls(_constant(a), _constant(b), _constant(c), **kwargs)

    def evaluate(self, t: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        out = []
        for name in ("a", "b", "c"):
            v = np.broadcast_to(np.asarray(getattr(self, name)(t, x), dtype=float), np.shape(x))
            bad = ~np.isfinite(v)
            if bad.any():
                j = np.flatnonzero(bad)[0]
                raise CoefficientError(f"coefficient {name} is not finite", t, float(x[j]))
            if self.bound is not None and np.any(np.abs(v) > self.bound):
                j = np.flatnonzero(np.abs(v) > self.bound)[0]
                raise CoefficientError(f"|{name}| exceeds bound {self.bound}", t, float(x[j]))
            out.append(v)
        if np.any(out[0] < 0):
            j = np.flatnonzero(out[0] < 0)[0]
            raise CoefficientError("diffusion coefficient a is negative", t, float(x[j]))
        return out[0], out[1], out[2]


def apply_L(coeffs: CoefficientSet, t: float, phi: GridFunction) -> GridFunction:
    a, b, c = coeffs.evaluate(t, phi.points)
    v = a * second_diff_wide(phi).values + b * delta_sym(phi).values + c * phi.values
    return GridFunction(phi.spec, v)


# -- matrix form ----------------------------------------------------------


def _banded(spec: GridSpec, stencil: dict[int, float]) -> sp.csr_matrix:
    size = spec.size
    offsets = [o for o in sorted(stencil) if abs(o) < size and stencil[o] != 0.0]
    if not offsets:
        return sp.csr_matrix((size, size))
    diagonals = [np.full(size - abs(o), stencil[o]) for o in offsets]
    return sp.diags(diagonals, offsets, shape=(size, size), format="csr")


def jump_matrix(weights: StencilWeights, spec: GridSpec) -> sp.csr_matrix:
    if spec.n != weights.n:
        raise SpacingMismatchError("grid and weights have different spacing")
    return _banded(spec, weights.stencil())


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Sparse matrix of ``L^h_t + J^h`` on the window at a fixed time."""

    t: float
    spec: GridSpec
    matrix: sp.csr_matrix

    def apply(self, phi: GridFunction) -> GridFunction:
        return GridFunction(self.spec, self.matrix @ phi.values)

    @property
    def bandwidth(self) -> int:
        coo = self.matrix.tocoo()
        return int(np.max(np.abs(coo.col - coo.row))) if coo.nnz else 0

    def row_sum_norm(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max()) if self.matrix.nnz else 0.0

    def write_triplets(self, path: str | Path):
        """Matrix-market style coordinate text, 1-based indices."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            fh.write(f"% t={float(self.t)!r} h={self.spec.h!r} R={self.spec.radius!r}\n")
            fh.write(f"{self.spec.size} {self.spec.size} {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


class SpatialOperator:
    """``L^h_t + J^h`` on a fixed window; the jump part is assembled once."""

    def __init__(self, coeffs: CoefficientSet, weights: StencilWeights, spec: GridSpec):
        self.coeffs = coeffs
        self.weights = weights
        self.spec = spec
        self.jump = jump_matrix(weights, spec)
        h = spec.h
        self.wide = _banded(spec, {-2: 1 / (4 * h * h), 0: -2 / (4 * h * h), 2: 1 / (4 * h * h)})
        self.sym = _banded(spec, {-1: -1 / (2 * h), 1: 1 / (2 * h)})
        self._x = spec.points

    def apply(self, t: float, v: np.ndarray) -> np.ndarray:
        a, b, c = self.coeffs.evaluate(t, self._x)
        w = (shift(v, 2) - 2 * v + shift(v, -2)) / (4 * self.spec.h**2)
        s = (shift(v, 1) - shift(v, -1)) / (2 * self.spec.h)
        return a * w + b * s + c * v + self.jump @ v

    def local_matrix(self, t: float) -> sp.csr_matrix:
        a, b, c = self.coeffs.evaluate(t, self._x)
        return (sp.diags(a) @ self.wide + sp.diags(b) @ self.sym + sp.diags(c)).tocsr()

    def at(self, t: float) -> DiscreteOperator:
        return DiscreteOperator(t, self.spec, (self.local_matrix(t) + self.jump).tocsr())

    def row_sum_norm(self, t: float) -> float:
        return self.at(t).row_sum_norm()


def assemble(coeffs: CoefficientSet, measure: LevyMeasure, spec: GridSpec, t: float, k_max: int) -> DiscreteOperator:
    weights = build_weights(measure, spec.h, k_max)
    return SpatialOperator(coeffs, weights, spec).at(t)
