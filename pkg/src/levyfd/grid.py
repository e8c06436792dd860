"""Grid functions on a truncated uniform grid ``hZ ∩ [-R, R]``.

Values outside the window are taken to be zero, so every shift is total.
The spacing is always ``h = 1/n`` for a positive integer ``n``; internally
the grid is stored by the integers ``n`` and ``m`` (``R = m/n``) so that grid
points ``j/n`` are reproduced bit-for-bit on nested grids.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidOffsetError, InvalidSpacingError, SamplingError, SpacingMismatchError


def spacing_denominator(h: float) -> int:
    """Return ``n`` with ``h == 1/n``; raise if ``h`` is not of that form."""
    if isinstance(h, (int, np.integer)) and not isinstance(h, bool) and h == 1:
        return 1
    if not (h > 0) or not math.isfinite(h):
        raise InvalidSpacingError(f"spacing must be positive, got {h!r}")
    n = round(1.0 / h)
    if n < 1 or abs(1.0 / n - h) > 1e-14 * max(1.0, h):
        raise InvalidSpacingError(f"spacing must be 1/n for a positive integer n, got {h!r}")
    return int(n)


@dataclass(frozen=True)
class GridSpec:
    """Symmetric grid ``x_j = j/n`` for ``|j| <= m``."""

    n: int
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidSpacingError(f"n must be a positive integer, got {self.n!r}")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidSpacingError(f"m must be a positive integer, got {self.m!r}")

    @classmethod
    def from_spacing(cls, h: float, radius: float) -> GridSpec:
        n = spacing_denominator(h)
        m = round(radius * n)
        if m < 1 or abs(m - radius * n) > 1e-9:
            raise InvalidSpacingError(f"radius {radius!r} is not a positive multiple of h={h!r}")
        return cls(n, int(m))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def radius(self) -> float:
        return self.m / self.n

    @property
    def size(self) -> int:
        return 2 * self.m + 1

    @property
    def points(self) -> np.ndarray:
        return np.arange(-self.m, self.m + 1) / self.n

    def zeros(self) -> GridFunction:
        return GridFunction(self, np.zeros(self.size))


def shift(values: np.ndarray, s: int) -> np.ndarray:
    """Return ``v(x + s h)`` with zero extension outside the window."""
    out = np.zeros_like(values)
    size = values.shape[-1]
    if s == 0:
        out[...] = values
    elif 0 < s < size:
        out[..., :-s] = values[..., s:]
    elif -size < s < 0:
        out[..., -s:] = values[..., :s]
    return out


@dataclass(frozen=True, eq=False)
class GridFunction:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.spec.size,):
            raise ValueError(f"expected {self.spec.size} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            j = int(np.flatnonzero(~np.isfinite(values))[0])
            raise SamplingError("non-finite grid value", float(self.spec.points[j]))
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def points(self) -> np.ndarray:
        return self.spec.points

    def shifted(self, s: int) -> np.ndarray:
        return shift(self.values, s)

    def at(self, x: float) -> float:
        """Value at a grid point of ``hZ``; zero outside the window."""
        j = round(x * self.spec.n)
        if abs(j - x * self.spec.n) > 1e-9:
            raise InvalidOffsetError(f"{x!r} is not a grid point")
        if abs(j) > self.spec.m:
            return 0.0
        return float(self.values[j + self.spec.m])

    def _check(self, other: GridFunction):
        if other.spec != self.spec:
            raise SpacingMismatchError(f"grid mismatch: {self.spec} vs {other.spec}")

    def __add__(self, other: GridFunction) -> GridFunction:
        self._check(other)
        return GridFunction(self.spec, self.values + other.values)

    def __sub__(self, other: GridFunction) -> GridFunction:
        self._check(other)
        return GridFunction(self.spec, self.values - other.values)

    def __mul__(self, scalar: float) -> GridFunction:
        return GridFunction(self.spec, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> GridFunction:
        return GridFunction(self.spec, -self.values)

    def close_to(self, other: GridFunction, tol: float) -> bool:
        self._check(other)
        return float(np.max(np.abs(self.values - other.values))) <= tol

    # -- serialization ----------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "h": self.spec.h,
            "R": self.spec.radius,
            "n": self.spec.n,
            "m": self.spec.m,
            "x": self.points.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> GridFunction:
        spec = GridSpec(int(obj["n"]), int(obj["m"]))
        return cls(spec, np.asarray(obj["values"], dtype=float))

    def to_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# h={self.spec.h!r} R={self.spec.radius!r} n={self.spec.n} m={self.spec.m}\n")
            writer = csv.writer(fh)
            writer.writerow(["x", "value"])
            for x, v in zip(self.points, self.values):
                writer.writerow([repr(float(x)), repr(float(v))])

    @classmethod
    def from_csv(cls, path: str | Path) -> GridFunction:
        with open(path, newline="") as fh:
            header = fh.readline().lstrip("#").split()
            meta = dict(item.split("=", 1) for item in header)
            rows = list(csv.DictReader(fh))
        spec = GridSpec(int(meta["n"]), int(meta["m"]))
        return cls(spec, np.array([float(r["value"]) for r in rows]))


def _step_sign(phi: GridFunction, step: float) -> int:
    if step == 0:
        raise InvalidOffsetError("offset must be nonzero")
    if abs(abs(step) - phi.h) > 1e-12 * phi.h:
        raise InvalidOffsetError(f"offset {step!r} must be ±h with h={phi.h!r}")
    return 1 if step > 0 else -1


def delta_forward(phi: GridFunction, step: float) -> GridFunction:
    """One-sided difference ``(phi(x + step) - phi(x)) / step`` for ``step = ±h``."""
    s = _step_sign(phi, step)
    return GridFunction(phi.spec, (phi.shifted(s) - phi.values) / (s * phi.h))


def delta_sym(phi: GridFunction) -> GridFunction:
    h = phi.h
    forward = (phi.shifted(1) - phi.values) / h
    backward = (phi.shifted(-1) - phi.values) / -h
    return GridFunction(phi.spec, (forward + backward) / 2)


def second_diff_narrow(phi: GridFunction, offset: int = 0) -> GridFunction:
    """``delta_{-h} delta_h phi`` evaluated at ``x + offset*h``."""
    v = (phi.shifted(offset + 1) - 2 * phi.shifted(offset) + phi.shifted(offset - 1)) / phi.h**2
    return GridFunction(phi.spec, v)


def second_diff_wide(phi: GridFunction) -> GridFunction:
    """Composition of two symmetric differences (stencil width ``2h``)."""
    v = (phi.shifted(2) - 2 * phi.values + phi.shifted(-2)) / (4 * phi.h**2)
    return GridFunction(phi.spec, v)


def inner_l2(phi: GridFunction, psi: GridFunction) -> float:
    phi._check(psi)
    return phi.h * float(np.dot(phi.values, psi.values))


def norm_l2(phi: GridFunction) -> float:
    return math.sqrt(phi.h * float(np.dot(phi.values, phi.values)))


def norm_sup(phi: GridFunction) -> float:
    return float(np.max(np.abs(phi.values))) if phi.values.size else 0.0


def restrict(f: Callable, spec: GridSpec) -> GridFunction:
    """Sample ``f`` at the grid points (``f`` should accept an array)."""
    x = spec.points
    values = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape).copy()
    bad = ~np.isfinite(values)
    if bad.any():
        raise SamplingError("non-finite sample", float(x[np.flatnonzero(bad)[0]]))
    return GridFunction(spec, values)

