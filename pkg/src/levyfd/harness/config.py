"""Study configuration: TOML sections mapped onto dataclasses with defaults.

Grammar (every key optional; see ``configs/`` for complete examples)::

    [problem]       profile, radius, sharpness, power, time_factor, T, gamma, manufactured
    [coefficients]  a, b, c (expressions in t and x), bound
    [measure]       family plus that family's parameters
    [grid]          n (single level), ladder (list of n, h = 1/n), R, reach
    [time]          steps (single level), ladder (list of step counts), scheme, t (dump time)
    [tolerances]    quad_tol, eps_tail, solver_tol, stability_factor, max_step, probes, solver
    [thresholds]    space_slope, time_slope, r2, budget_factor
    [operators]     samples, families, nsd_n, stencil_inputs, stencil_n, theta_max,
                    consistency_n, nsd_tol, stencil_tol, variation_tol
    [output]        dir
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError
from ..grid import GridSpec
from ..levy import LevyMeasure, make_measure, tail_truncation_index
from ..operators import CoefficientSet
from ..reference import ManufacturedProblem, SmoothProfile, make_profile
from .expr import Expression


@dataclass
class ProblemConfig:
    profile: str = "bump"
    radius: float = 1.0
    sharpness: float = 1.0
    power: int = 6
    time_factor: str = "const"
    T: float = 0.5
    gamma: float = 2.0
    manufactured: bool = True


@dataclass
class CoefficientConfig:
    a: str = "0"
    b: str = "0"
    c: str = "0"
    bound: float | None = None


@dataclass
class GridConfig:
    n: int = 16
    ladder: list[int] = field(default_factory=lambda: [8, 16, 32, 64])
    R: float | None = None
    reach: str = "full"


@dataclass
class TimeConfig:
    steps: int = 16
    ladder: list[int] = field(default_factory=lambda: [8, 16, 32, 64])
    scheme: str = "implicit"
    t: float = 0.0


@dataclass
class Tolerances:
    quad_tol: float = 1e-10
    eps_tail: float = 1e-10
    solver_tol: float = 1e-10
    stability_factor: float = 0.5
    max_step: float = 1e-2
    probes: int = 30
    solver: str = "auto"


@dataclass
class Thresholds:
    space_slope: float = 0.9
    time_slope: float | None = None
    r2: float | None = None
    budget_factor: float = 10.0


@dataclass
class OperatorChecks:
    samples: int = 100
    families: list[str] = field(default_factory=lambda: ["power_law", "tempered", "compound_poisson"])
    nsd_n: list[int] = field(default_factory=lambda: [8, 16, 32])
    stencil_inputs: int = 50
    stencil_n: list[int] = field(default_factory=lambda: [4, 8, 16, 32])
    theta_max: int = 64
    consistency_n: list[int] = field(default_factory=lambda: [8, 16, 32, 64])
    nsd_tol: float = 1e-10
    stencil_tol: float = 1e-12
    variation_tol: float = 0.10
    consistency_slope: float = 0.9
    consistency_r2: float = 0.98


@dataclass
class OutputConfig:
    dir: str = "out"


@dataclass
class StudyConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    coefficients: CoefficientConfig = field(default_factory=CoefficientConfig)
    measure: dict = field(default_factory=lambda: {"family": "zero"})
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    thresholds: Thresholds = field(default_factory=Thresholds)
    operators: OperatorChecks = field(default_factory=OperatorChecks)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0

    # -- construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> StudyConfig:
        data = dict(data)
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in data:
                continue
            value = data.pop(f.name)
            if f.name in ("measure", "seed"):
                kwargs[f.name] = dict(value) if f.name == "measure" else int(value)
                continue
            section_type = type(f.default_factory())
            if not isinstance(value, dict):
                raise ConfigError(f"[{f.name}] must be a table")
            known = {sf.name for sf in dataclasses.fields(section_type)}
            unknown = set(value) - known
            if unknown:
                raise ConfigError(f"unknown keys in [{f.name}]: {sorted(unknown)}")
            kwargs[f.name] = section_type(**value)
        if data:
            raise ConfigError(f"unknown top-level keys: {sorted(data)}")
        config = cls(**kwargs)
        config.validate()
        return config

    @classmethod
    def load(cls, path: str | Path) -> StudyConfig:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["grid"]["R"] = self.window_radius
        return out

    def replace(self, **sections) -> StudyConfig:
        return dataclasses.replace(self, **sections)

    # -- checks -----------------------------------------------------------

    def validate(self):
        for n in [self.grid.n, *self.grid.ladder, *self.operators.nsd_n, *self.operators.stencil_n,
                  *self.operators.consistency_n]:
            if int(n) != n or n < 1:
                raise ConfigError(f"grid levels are given by n (h = 1/n) and must be positive integers, got {n!r}")
        for n in [self.time.steps, *self.time.ladder]:
            if int(n) != n or n < 1:
                raise ConfigError(f"step counts must be positive integers, got {n!r}")
        if self.grid.reach not in ("full", "tail"):
            raise ConfigError("grid.reach must be 'full' or 'tail'")
        if self.time.scheme not in ("implicit", "semidiscrete"):
            raise ConfigError("time.scheme must be 'implicit' or 'semidiscrete'")
        if not self.problem.T > 0:
            raise ConfigError("problem.T must be positive")
        for name in ("a", "b", "c"):
            Expression(getattr(self.coefficients, name))
        self.build_measure()
        self.build_profile()
        minimum = self.problem.radius + 1
        if math.isfinite(self.problem.radius) and self.window_radius < minimum - 1e-12:
            raise ConfigError(f"window radius R={self.window_radius} is smaller than support + unit ball "
                              f"({minimum})")
        for n in [self.grid.n, *self.grid.ladder]:
            GridSpec.from_spacing(1 / n, self.window_radius)

    # -- derived objects --------------------------------------------------

    @property
    def window_radius(self) -> float:
        if self.grid.R is not None:
            return float(self.grid.R)
        return float(math.ceil(self.problem.radius) + 1)

    def grid_spec(self, n: int) -> GridSpec:
        return GridSpec.from_spacing(1 / n, self.window_radius)

    def build_measure(self) -> LevyMeasure:
        params = dict(self.measure)
        family = params.pop("family", "zero")
        try:
            return make_measure(family, **params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for measure family {family!r}: {exc}") from None

    def build_profile(self) -> SmoothProfile:
        p = self.problem
        try:
            return make_profile(p.profile, p.radius, p.power, p.time_factor, p.sharpness)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def build_coefficients(self) -> CoefficientSet:
        c = self.coefficients
        return CoefficientSet(Expression(c.a), Expression(c.b), Expression(c.c), bound=c.bound,
                              gamma=self.problem.gamma)

    def build_problem(self, measure: LevyMeasure | None = None) -> ManufacturedProblem:
        return ManufacturedProblem(self.build_profile(), self.build_coefficients(),
                                   measure or self.build_measure(), self.tolerances.quad_tol)

    def reach(self, spec: GridSpec, measure: LevyMeasure) -> int:
        """Largest cell index whose gain term is kept in ``J^h_2``.

        ``full`` keeps every cell that can connect two window points
        (``2m``), so nothing is truncated; ``tail`` stops where the remaining
        mass drops below ``eps_tail``.
        """
        if self.grid.reach == "full":
            return max(2 * spec.m, spec.n)
        return min(tail_truncation_index(measure, spec.h, self.tolerances.eps_tail), max(2 * spec.m, spec.n))
