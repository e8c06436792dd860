"""Time stepping for the semidiscrete system ``v' = (L^h_t + J^h) v + f_t``.

Two integrators are provided: classical RK4 with a stability-bounded fine
step, used as the reference for the semidiscrete solution, and backward Euler

    (I - tau A_i) v_i = v_{i-1} + tau f(t_i),   A_i = L^h_{t_i} + J^h,

which needs one sparse solve per step. Before each implicit step the
coercivity constant ``max (A phi, phi) / |phi|^2`` is estimated by probing and
the step is refused unless ``tau`` times that estimate is at most 1/2.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InstabilityError, SolverError, StepSizeError
from .grid import GridFunction, GridSpec
from .levy import LevyMeasure
from .operators import CoefficientSet, DiscreteOperator, SpatialOperator, build_weights

logger = logging.getLogger(__name__)

DIRECT_SOLVE_MAX_POINTS = 2000
BLOWUP_LEVEL = 1e12
DEFAULT_MAX_STEP = 1e-2


@dataclass(frozen=True)
class ProblemSpec:
    """Data of ``du = [(L_t + J) u + f_t] dt``, ``u_0 = psi`` on ``[0, T]``.

    ``forcing(t, x)`` and ``initial(x)`` take arrays of points. ``gamma`` is
    the time-Hölder exponent in the squared-difference convention of
    :class:`~levyfd.operators.CoefficientSet`.
    """

    coeffs: CoefficientSet
    initial: Callable[[np.ndarray], np.ndarray]
    T: float
    forcing: Callable[[float, np.ndarray], np.ndarray] | None = None
    gamma: float = 2.0

    def forcing_values(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.forcing is None:
            return np.zeros_like(x)
        return np.broadcast_to(np.asarray(self.forcing(t, x), dtype=float), x.shape)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n: int

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError(f"number of steps must be a positive integer, got {self.n!r}")
        if not self.T > 0:
            raise ValueError("horizon must be positive")

    @property
    def tau(self) -> float:
        return self.T / self.n

    @property
    def knots(self) -> np.ndarray:
        return self.T * np.arange(self.n + 1) / self.n


@dataclass
class Trajectory:
    spec: GridSpec
    times: list[float]
    values: list[np.ndarray]
    scheme: str
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def snapshot(self, i: int) -> GridFunction:
        return GridFunction(self.spec, self.values[i])

    def at(self, t: float, tol: float = 1e-12) -> GridFunction:
        for s, v in zip(self.times, self.values):
            if abs(s - t) <= tol * max(1.0, abs(t)):
                return GridFunction(self.spec, v)
        raise KeyError(f"no snapshot at t={t!r}")

    def to_csv(self, path: str | Path):
        """Long format with columns ``t, x, value``."""
        x = self.spec.points
        with open(path, "w", newline="") as fh:
            fh.write(f"# scheme={self.scheme} h={self.spec.h!r} R={self.spec.radius!r}\n")
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "value"])
            for t, v in zip(self.times, self.values):
                for xi, vi in zip(x, v):
                    writer.writerow([repr(float(t)), repr(float(xi)), repr(float(vi))])

    def to_json_obj(self) -> dict:
        return {
            "scheme": self.scheme,
            "h": self.spec.h,
            "R": self.spec.radius,
            "x": self.spec.points.tolist(),
            "snapshots": [{"t": t, "values": v.tolist()} for t, v in zip(self.times, self.values)],
        }

    def write_json(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_json_obj()))

    def write_diagnostics(self, path: str | Path):
        Path(path).write_text(json.dumps(self.diagnostics, indent=2))


def _operator(problem: ProblemSpec, spec: GridSpec, measure: LevyMeasure, k_max: int) -> SpatialOperator:
    return SpatialOperator(problem.coeffs, build_weights(measure, spec.h, k_max), spec)


def stable_step(op: SpatialOperator, T: float, factor: float = 0.5, samples: int = 5) -> float:
    """Largest RK4 step allowed by ``dt * |A|_inf <= factor`` over sampled times."""
    norm = max(op.row_sum_norm(t) for t in np.linspace(0.0, T, samples))
    return factor / norm if norm > 0 else T


def semidiscrete_solve(problem: ProblemSpec, spec: GridSpec, measure: LevyMeasure, k_max: int,
                       dt_fine: float | None = None, *, times=None, stability_factor: float = 0.5,
                       max_step: float = DEFAULT_MAX_STEP, operator: SpatialOperator | None = None) -> Trajectory:
    """Integrate the semidiscrete system with classical RK4.

    Snapshots are stored at ``{0, T}`` and any extra ``times``; each interval
    between snapshot times is split into equal steps no longer than
    ``dt_fine``, which defaults to ``min(stability_factor / |A|_inf, max_step)``.
    """
    op = operator or _operator(problem, spec, measure, k_max)
    dt_max = stable_step(op, problem.T, stability_factor)
    if dt_fine is None:
        dt_fine = min(dt_max, max_step)
    elif dt_fine > dt_max * (1 + 1e-12):
        raise InstabilityError(f"dt_fine={dt_fine:.3e} exceeds the RK4 stability bound {dt_max:.3e}; "
                               "use a smaller step")
    times = sorted({0.0, float(problem.T)} | {float(t) for t in (times or ())})
    x = spec.points
    f = problem.forcing_values

    def rhs(t, v):
        return op.apply(t, v) + f(t, x)

    v = np.asarray(problem.initial(x), dtype=float) * np.ones_like(x)
    t = 0.0
    out_t, out_v = [], []
    steps = 0
    for target in times:
        span = target - t
        if span > 0:
            m = max(1, math.ceil(span / dt_fine - 1e-9))
            dt = span / m
            for j in range(m):
                s = t + j * dt
                k1 = rhs(s, v)
                k2 = rhs(s + dt / 2, v + dt / 2 * k1)
                k3 = rhs(s + dt / 2, v + dt / 2 * k2)
                k4 = rhs(s + dt, v + dt * k3)
                v = v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.abs(v) < BLOWUP_LEVEL):
                    raise InstabilityError(f"RK4 solution blew up near t={s + dt:.4g}; use a smaller dt_fine")
            steps += m
            t = target
        out_t.append(t)
        out_v.append(v.copy())
    diagnostics = {"dt_fine": dt_fine, "dt_stable": dt_max, "steps": steps}
    return Trajectory(spec, out_t, out_v, "semidiscrete", diagnostics)


# -- implicit Euler -------------------------------------------------------


@dataclass(frozen=True)
class Solvability:
    passed: bool
    estimate: float
    tau: float
    factor: float

    @property
    def margin(self) -> float:
        return self.factor - self.tau * self.estimate

    @property
    def threshold(self) -> float:
        """Largest step that would pass."""
        return self.factor / self.estimate if self.estimate > 0 else math.inf


def _smooth_probes(size: int) -> list[np.ndarray]:
    s = np.linspace(-1.0, 1.0, size)
    probes = [np.ones(size), 1 - s**2, np.exp(-20 * s**2)]
    probes += [np.sin(j * np.pi * (s + 1) / 2) for j in (1, 2, 3, 5)]
    return probes


def _top_symmetric_eigvec(matrix: sp.spmatrix) -> np.ndarray:
    sym = (matrix + matrix.T) / 2
    size = sym.shape[0]
    if size <= 800:
        _, vec = scipy.linalg.eigh(sym.toarray(), subset_by_index=[size - 1, size - 1])
        return vec[:, 0]
    _, vec = spla.eigsh(sym.tocsc(), k=1, which="LA")
    return vec[:, 0]


def coercivity_estimate(op: DiscreteOperator, probes: int = 30, seed: int = 0) -> float:
    """``max (A phi, phi) / |phi|^2`` over random, smooth and extremal probes."""
    A = op.matrix
    size = A.shape[0]
    rng = np.random.default_rng(seed)
    candidates = [rng.standard_normal(size) for _ in range(probes)]
    candidates += _smooth_probes(size)
    candidates.append(_top_symmetric_eigvec(A))
    best = -math.inf
    for phi in candidates:
        q = float(phi @ (A @ phi)) / float(phi @ phi)
        best = max(best, q)
    return best


def check_solvability(op: DiscreteOperator, tau: float, *, probes: int = 30, seed: int = 0,
                      factor: float = 0.5) -> Solvability:
    estimate = coercivity_estimate(op, probes, seed)
    return Solvability(tau * estimate <= factor, estimate, tau, factor)


@dataclass(frozen=True)
class SolveInfo:
    residual: float
    iterations: int
    method: str


def linear_solve(M: sp.spmatrix, rhs: np.ndarray, tol: float = 1e-10, *, method: str = "auto",
                 maxiter: int = 500, restart: int = 50, h: float = 1.0) -> tuple[np.ndarray, SolveInfo]:
    """Solve ``M x = rhs`` with ``|M x - rhs| <= tol (1 + |rhs|)`` in the grid l2 norm.

    ``method`` is ``"direct"`` (sparse LU), ``"krylov"`` (restarted GMRES with
    an incomplete-LU preconditioner) or ``"auto"``.
    """
    M = sp.csc_matrix(M)
    size = M.shape[0]
    norm = lambda v: math.sqrt(h * float(v @ v))
    target = tol * (1 + norm(rhs))
    if method == "auto":
        method = "direct" if size <= DIRECT_SOLVE_MAX_POINTS else "krylov"
    if method == "direct":
        x = spla.splu(M).solve(rhs)
        residual = norm(M @ x - rhs)
        if residual > target:
            # one step of iterative refinement before giving up
            x = x + spla.splu(M).solve(rhs - M @ x)
            residual = norm(M @ x - rhs)
        if residual > target:
            raise SolverError("direct solve missed the residual tolerance", [residual])
        return x, SolveInfo(residual, 1, "direct")
    if method != "krylov":
        raise ValueError(f"unknown solve method {method!r}")
    history: list[float] = []
    try:
        ilu = spla.spilu(M, drop_tol=1e-6, fill_factor=20)
        precond = spla.LinearOperator(M.shape, ilu.solve)
    except RuntimeError:
        precond = None
    rtol = target / max(norm(rhs), 1e-300)
    x, info = spla.gmres(M, rhs, rtol=min(rtol, 0.1), atol=0.0, restart=restart, maxiter=maxiter, M=precond,
                         callback=lambda r: history.append(float(r)), callback_type="pr_norm")
    residual = norm(M @ x - rhs)
    history.append(residual)
    if residual > target:
        raise SolverError(f"GMRES did not converge (info={info})", history)
    return x, SolveInfo(residual, len(history) - 1, "krylov")


def implicit_euler_solve(problem: ProblemSpec, spec: GridSpec, measure: LevyMeasure, k_max: int,
                         timegrid: TimeGrid, *, solver_tol: float = 1e-10, method: str = "auto",
                         probes: int = 30, seed: int = 0, operator: SpatialOperator | None = None) -> Trajectory:
    """Backward Euler with the forcing sampled at the right endpoint of each step."""
    op = operator or _operator(problem, spec, measure, k_max)
    tau = timegrid.tau
    x = spec.points
    identity = sp.identity(spec.size, format="csr")
    v = np.asarray(problem.initial(x), dtype=float) * np.ones_like(x)
    times, values = [0.0], [v.copy()]
    residuals, relative, iterations, estimates = [], [], [], []
    for i in range(1, timegrid.n + 1):
        t = timegrid.knots[i]
        A = op.at(t)
        check = check_solvability(A, tau, probes=probes, seed=seed)
        estimates.append(check.estimate)
        if not check.passed:
            raise StepSizeError(f"tau={tau:.3e} too large at t={t:.4g}: coercivity estimate {check.estimate:.3e} "
                                f"requires tau <= {check.threshold:.3e}", check.threshold)
        rhs = v + tau * problem.forcing_values(t, x)
        v, info = linear_solve(identity - tau * A.matrix, rhs, solver_tol, method=method, h=spec.h)
        residuals.append(info.residual)
        relative.append(info.residual / (1 + math.sqrt(spec.h * float(rhs @ rhs))))
        iterations.append(info.iterations)
        times.append(float(t))
        values.append(v.copy())
    diagnostics = {
        "tau": tau,
        "steps": timegrid.n,
        "residuals": residuals,
        "relative_residuals": relative,
        "iterations": iterations,
        "coercivity_estimates": estimates,
        "coercivity_max": max(estimates) if estimates else None,
    }
    return Trajectory(spec, times, values, "implicit-euler", diagnostics)
