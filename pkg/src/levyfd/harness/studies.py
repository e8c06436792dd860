"""Convergence studies, operator property checks and single solves.

Level computations are module-level functions taking a plain config dict so
that they can be shipped to worker processes.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..errors import InstabilityError, StepSizeError
from ..grid import GridFunction, GridSpec, restrict
from ..integrator import ProblemSpec, TimeGrid, implicit_euler_solve, semidiscrete_solve, stable_step
from ..levy import make_measure
from ..operators import SpatialOperator, apply_J, apply_J1, apply_J1_direct, build_weights, jump_matrix, theta_weight
from ..reference import continuous_J_values
from .config import StudyConfig
from .report import ConvergenceReport, OperatorReport, PropertyResult

RK_ORDER_FACTOR = 15.0  # (2^4 - 1) for step-doubling with RK4


# -- rate fitting ---------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float | None
    intercept: float | None
    r2: float | None
    status: str
    levels: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "status": self.status,
                "levels": self.levels}


def fit_rate(levels) -> RateFit:
    """Least squares of ``log error`` on ``log parameter``.

    Status is ``ok``, ``exact`` (all errors zero) or ``insufficient-data``
    (fewer than three positive errors at distinct parameters).
    """
    levels = [(float(p), float(e)) for p, e in levels]
    if levels and all(e == 0.0 for _, e in levels):
        return RateFit(None, None, None, "exact", len(levels))
    positive = [(p, e) for p, e in levels if e > 0.0]
    if len(positive) < 3 or len({p for p, _ in positive}) < 3:
        return RateFit(None, None, None, "insufficient-data", len(positive))
    x = np.log([p for p, _ in positive])
    y = np.log([e for _, e in positive])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / total if total > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, "ok", len(positive))


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def snapshot_times(T: float) -> list[float]:
    return [T * k / 4 for k in range(5)]


def _grid_l2(values: np.ndarray, h: float) -> float:
    return math.sqrt(h * float(values @ values))


# -- spatial study --------------------------------------------------------


def dropped_gain_mass(measure, spec: GridSpec, k_max: int, support_radius: float) -> float:
    """Mass of the cells beyond ``k_max`` that can still reach the support of ``u``.

    A jump ``z`` from a window point lands in ``[-r_u, r_u]`` only if
    ``|z| <= R + r_u``; beyond that the dropped gain term vanishes exactly.
    """
    reach = k_max * spec.h
    if reach >= spec.radius + support_radius:
        return 0.0
    return measure.tail_mass(reach)


def _rk_error_estimate(problem, spec, measure, k_max, trajectory, op, config: StudyConfig) -> float:
    """Step-doubling estimate of the RK4 error in ``trajectory`` (sup norm)."""
    tol = config.tolerances
    coarse = semidiscrete_solve(problem, spec, measure, k_max, 2 * trajectory.diagnostics["dt_fine"],
                                times=trajectory.times, stability_factor=2 * tol.stability_factor, operator=op)
    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(trajectory.values, coarse.values))
    return diff / RK_ORDER_FACTOR


def space_level(config_dict: dict, n: int, out_dir: str | None = None) -> dict:
    config = StudyConfig.from_dict(config_dict)
    start = time.perf_counter()
    measure = config.build_measure()
    manufactured = config.build_problem(measure)
    spec = config.grid_spec(n)
    k_max = config.reach(spec, measure)
    op = SpatialOperator(manufactured.coeffs, build_weights(measure, spec.h, k_max), spec)
    T = config.problem.T
    problem = manufactured.to_problem(T)
    tol = config.tolerances
    level = {"n": n, "h": spec.h, "tau": None, "k_max": k_max, "points": spec.size}
    try:
        traj = semidiscrete_solve(problem, spec, measure, k_max, times=snapshot_times(T),
                                  stability_factor=tol.stability_factor, max_step=tol.max_step, operator=op)
    except InstabilityError as exc:
        level.update(status="failed", error=str(exc), sup_err=None, l2_err=None)
        return level
    x = spec.points
    sup_err = l2_err = 0.0
    u_sup = 0.0
    for t, v in zip(traj.times, traj.values):
        u = manufactured.exact(t, x)
        u_sup = max(u_sup, float(np.max(np.abs(u))))
        sup_err = max(sup_err, float(np.max(np.abs(v - u))))
        l2_err = max(l2_err, _grid_l2(v - u, spec.h))
    rk = _rk_error_estimate(problem, spec, measure, k_max, traj, op, config)
    g_max = max(abs(manufactured.profile.g(t)) for t in np.linspace(0, T, 33))
    budget = {
        "quadrature": T * tol.quad_tol * g_max,
        "tail": T * dropped_gain_mass(measure, spec, k_max, manufactured.profile.radius) * u_sup,
        "rk": rk,
    }
    budget["total"] = sum(budget.values())
    if out_dir is not None:
        traj.to_csv(Path(out_dir) / f"trajectory_n{n}.csv")
    level.update(status="ok", sup_err=sup_err, l2_err=l2_err, budget=budget,
                 diagnostics=traj.diagnostics, runtime_s=time.perf_counter() - start)
    return level


def run_convergence_space(config: StudyConfig, workers: int = 1, out_dir: str | Path | None = None
                          ) -> ConvergenceReport:
    data = config.to_dict()
    out = None if out_dir is None else str(out_dir)
    levels = _map(space_level, [(data, n, out) for n in config.grid.ladder], workers)
    report = ConvergenceReport("converge-space", data, "h", levels,
                               predicted_rate=1.0, threshold=config.thresholds.space_slope,
                               r2_threshold=config.thresholds.r2, budget_factor=config.thresholds.budget_factor,
                               asserted=("sup", "l2"))
    report.extra["snapshot_times"] = snapshot_times(config.problem.T)
    report.finalize()
    return report


# -- temporal study -------------------------------------------------------


def time_case(config: StudyConfig) -> tuple[str, float]:
    """Which implicit-scheme error bound applies, and its rate in the norm."""
    gamma = config.problem.gamma
    smooth = config.build_profile().smoothness >= 5
    if smooth and gamma >= 1:
        return "ii", min(2.0, gamma) / 2
    return "i", min(1.0, gamma) / 2


def time_level(config_dict: dict, steps: int, oracle_times: list[float], oracle_values: list[np.ndarray]) -> dict:
    config = StudyConfig.from_dict(config_dict)
    start = time.perf_counter()
    measure = config.build_measure()
    manufactured = config.build_problem(measure)
    spec = config.grid_spec(config.grid.n)
    k_max = config.reach(spec, measure)
    op = SpatialOperator(manufactured.coeffs, build_weights(measure, spec.h, k_max), spec)
    tol = config.tolerances
    grid = TimeGrid(config.problem.T, steps)
    level = {"n": spec.n, "h": spec.h, "steps": steps, "tau": grid.tau}
    try:
        traj = implicit_euler_solve(manufactured.to_problem(config.problem.T), spec, measure, k_max, grid,
                                    solver_tol=tol.solver_tol, method=tol.solver, probes=tol.probes,
                                    seed=config.seed, operator=op)
    except StepSizeError as exc:
        level.update(status="solvability-failed", error=str(exc), threshold=exc.threshold,
                     sup_err=None, l2_err=None)
        return level
    lookup = {round(t, 12): v for t, v in zip(oracle_times, oracle_values)}
    sup_err = l2_err = 0.0
    v_max = 0.0
    for t, v in zip(traj.times, traj.values):
        ref = lookup[round(t, 12)]
        sup_err = max(sup_err, float(np.max(np.abs(v - ref))))
        l2_err = max(l2_err, _grid_l2(v - ref, spec.h))
        v_max = max(v_max, _grid_l2(v, spec.h))
    diag = traj.diagnostics
    level.update(status="ok", sup_err=sup_err, l2_err=l2_err,
                 solver_budget=steps * tol.solver_tol * (1 + v_max),
                 diagnostics={"residual_max": max(diag["residuals"]), "iterations": sum(diag["iterations"]),
                              "coercivity_max": diag["coercivity_max"]},
                 runtime_s=time.perf_counter() - start)
    return level


def run_convergence_time(config: StudyConfig, workers: int = 1, out_dir: str | Path | None = None
                         ) -> ConvergenceReport:
    data = config.to_dict()
    measure = config.build_measure()
    manufactured = config.build_problem(measure)
    spec = config.grid_spec(config.grid.n)
    k_max = config.reach(spec, measure)
    op = SpatialOperator(manufactured.coeffs, build_weights(measure, spec.h, k_max), spec)
    T = config.problem.T
    tol = config.tolerances
    knots = sorted({round(T * i / s, 12) for s in config.time.ladder for i in range(s + 1)})
    problem = manufactured.to_problem(T)
    start = time.perf_counter()
    oracle = semidiscrete_solve(problem, spec, measure, k_max, times=knots, stability_factor=tol.stability_factor,
                                max_step=tol.max_step, operator=op)
    rk = _rk_error_estimate(problem, spec, measure, k_max, oracle, op, config)
    oracle_runtime = time.perf_counter() - start
    if out_dir is not None:
        oracle.to_csv(Path(out_dir) / "oracle_semidiscrete.csv")
    jobs = [(data, s, oracle.times, oracle.values) for s in config.time.ladder]
    levels = _map(time_level, jobs, workers)
    for level in levels:
        if level["status"] == "ok":
            budget = {"rk": rk, "solver": level.pop("solver_budget")}
            budget["total"] = sum(budget.values())
            level["budget"] = budget
    case, predicted = time_case(config)
    threshold = config.thresholds.time_slope
    if threshold is None:
        threshold = 0.9 * predicted
    report = ConvergenceReport("converge-time", data, "tau", levels, predicted_rate=predicted, threshold=threshold,
                               r2_threshold=config.thresholds.r2, budget_factor=config.thresholds.budget_factor,
                               asserted=("l2",))
    report.extra.update(case=case, gamma=config.problem.gamma,
                        oracle={"dt_fine": oracle.diagnostics["dt_fine"], "steps": oracle.diagnostics["steps"],
                                "rk_error_estimate": rk},
                        runtime={"oracle_s": oracle_runtime})
    report.finalize()
    return report


# -- operator checks ------------------------------------------------------


CHECK_MEASURES = {
    "power_law": {"family": "power_law", "alpha": 0.5},
    "tempered": {"family": "tempered", "alpha": 0.5, "lam": 1.0},
    "compound_poisson": {"family": "compound_poisson", "rate": 2.0, "lo": -2.5, "hi": 2.5},
    "atomic": {"family": "atomic", "atoms": [[-1.75, 0.4], [-0.3, 1.0], [0.5, 2.0], [2.0, 0.7]]},
}
STENCIL_FAMILIES = ("power_law", "compound_poisson", "atomic")


def _check_measure(name: str):
    params = dict(CHECK_MEASURES[name])
    return make_measure(params.pop("family"), **params)


def random_compact(rng: np.random.Generator, spec: GridSpec) -> np.ndarray:
    """Random values on a random sub-interval of the window, zero elsewhere."""
    size = spec.size
    lo = int(rng.integers(0, size // 2))
    hi = int(rng.integers(lo + 1, size + 1))
    v = np.zeros(size)
    v[lo:hi] = rng.uniform(-1.0, 1.0, hi - lo)
    return v


def check_negative_semidefinite(config: StudyConfig, seed: int) -> PropertyResult:
    ops = config.operators
    rng = np.random.default_rng(seed)
    worst = {"ratio": -math.inf}
    count = 0
    for name in ops.families:
        measure = _check_measure(name)
        for n in ops.nsd_n:
            spec = GridSpec(n, 2 * n)
            J = jump_matrix(build_weights(measure, spec.h, 2 * spec.m), spec)
            for i in range(ops.samples):
                phi = random_compact(rng, spec)
                for order in range(3):
                    # difference quotients of a compactly supported function
                    psi = phi if order == 0 else np.diff(np.concatenate(([0.0], psi))) * n
                    norm2 = spec.h * float(psi @ psi)
                    if norm2 == 0.0:
                        continue
                    ratio = spec.h * float((J @ psi) @ psi) / norm2
                    count += 1
                    if ratio > worst["ratio"]:
                        worst.update(ratio=ratio, family=name, n=n, sample=i, derivative=order)
            # the extremal witness: top eigenvalue of the symmetric part
            top = float(np.linalg.eigvalsh(((J + J.T) / 2).toarray())[-1])
            if top > worst.get("eigenvalue", -math.inf):
                worst["eigenvalue"] = top
                worst["eigenvalue_at"] = {"family": name, "n": n}
    passed = worst["ratio"] <= ops.nsd_tol and worst["eigenvalue"] <= ops.nsd_tol
    return PropertyResult("negative-semidefinite", passed,
                          f"max (J^h psi, psi)/|psi|^2 = {worst['ratio']:.3e} over {count} functions, "
                          f"top eigenvalue of the symmetric part {worst['eigenvalue']:.3e} "
                          f"(tolerance {ops.nsd_tol:g})", worst)


def check_collapsed_stencil(config: StudyConfig, seed: int) -> PropertyResult:
    ops = config.operators
    rng = np.random.default_rng(seed + 1)
    worst = {"diff": 0.0}
    count = 0
    for name in STENCIL_FAMILIES:
        measure = _check_measure(name)
        for n in ops.stencil_n:
            spec = GridSpec(n, 2 * n)
            weights = build_weights(measure, spec.h, 2 * spec.m)
            for i in range(ops.stencil_inputs):
                phi = GridFunction(spec, rng.uniform(-1.0, 1.0, spec.size))
                diff = float(np.max(np.abs(apply_J1(phi, weights).values - apply_J1_direct(phi, measure).values)))
                count += 1
                if diff > worst["diff"]:
                    worst = {"diff": diff, "family": name, "n": n, "sample": i}
    return PropertyResult("collapsed-stencil", worst["diff"] <= ops.stencil_tol,
                          f"max sup difference {worst['diff']:.3e} over {count} inputs (tolerance {ops.stencil_tol:g})",
                          worst)


def check_theta_closure(config: StudyConfig) -> PropertyResult:
    bad = [k for k in range(1, config.operators.theta_max + 1)
           if sum((theta_weight(k, l) for l in range(k)), Fraction(0)) != Fraction(1, 2)]
    return PropertyResult("theta-closure", not bad,
                          f"sum_l theta_k^l == 1/2 for |k| <= {config.operators.theta_max}" if not bad
                          else f"closure fails for k in {bad[:5]}", {"failing": bad[:5]})


def consistency_levels(config: StudyConfig) -> list[dict]:
    measure = config.build_measure()
    shape = config.build_profile().shape
    out = []
    for n in config.operators.consistency_n:
        spec = config.grid_spec(n)
        weights = build_weights(measure, spec.h, config.reach(spec, measure))
        jh = apply_J(restrict(shape.value, spec), weights).values
        exact = continuous_J_values(shape, spec.points, measure, config.tolerances.quad_tol)
        err = np.abs(jh - exact)
        j = int(np.argmax(err))
        out.append({"n": n, "h": spec.h, "sup_err": float(err[j]), "worst_x": float(spec.points[j]),
                    "norm_l2": math.sqrt(spec.h * float(jh @ jh))})
    return out


def check_consistency(config: StudyConfig, levels: list[dict]) -> PropertyResult:
    ops = config.operators
    fit = fit_rate([(lv["h"], lv["sup_err"]) for lv in levels])
    passed = fit.status == "ok" and fit.slope >= ops.consistency_slope and fit.r2 >= ops.consistency_r2
    return PropertyResult("operator-consistency", passed,
                          f"sup |J^h phi - J phi| slope {fit.slope} R^2 {fit.r2} "
                          f"(need slope >= {ops.consistency_slope}, R^2 >= {ops.consistency_r2})",
                          {"fit": fit.to_dict(), "levels": levels})


def check_no_blowup(config: StudyConfig, levels: list[dict]) -> PropertyResult:
    norms = [lv["norm_l2"] for lv in levels]
    variation = (max(norms) - min(norms)) / min(norms) if min(norms) > 0 else math.inf
    return PropertyResult("no-blowup", variation <= config.operators.variation_tol,
                          f"|J^h phi| varies by {variation:.2%} across levels "
                          f"(tolerance {config.operators.variation_tol:.0%})",
                          {"variation": variation, "norms": dict(zip([lv["n"] for lv in levels], norms))})


def run_operator_checks(config: StudyConfig, seed: int | None = None) -> OperatorReport:
    seed = config.seed if seed is None else seed
    properties = []
    timings = {}
    for name, fn in [("negative-semidefinite", lambda: check_negative_semidefinite(config, seed)),
                     ("collapsed-stencil", lambda: check_collapsed_stencil(config, seed)),
                     ("theta-closure", lambda: check_theta_closure(config))]:
        start = time.perf_counter()
        properties.append(fn())
        timings[name] = time.perf_counter() - start
    start = time.perf_counter()
    levels = consistency_levels(config)
    properties.append(check_consistency(config, levels))
    properties.append(check_no_blowup(config, levels))
    timings["operator-consistency"] = time.perf_counter() - start
    return OperatorReport(config.to_dict(), properties, {"seconds": timings})


# -- single solve ---------------------------------------------------------


def solve(config: StudyConfig, out_dir: str | Path | None = None) -> dict:
    """One problem at ``h = 1/grid.n``; implicit with ``time.steps`` steps or semidiscrete."""
    measure = config.build_measure()
    manufactured = config.build_problem(measure)
    spec = config.grid_spec(config.grid.n)
    k_max = config.reach(spec, measure)
    op = SpatialOperator(manufactured.coeffs, build_weights(measure, spec.h, k_max), spec)
    T = config.problem.T
    tol = config.tolerances
    if config.problem.manufactured:
        problem = manufactured.to_problem(T)
    else:
        # unforced evolution of the profile's initial datum
        problem = ProblemSpec(manufactured.coeffs, lambda x: manufactured.profile.u(0.0, x), T, None,
                              config.problem.gamma)
    if config.time.scheme == "implicit":
        traj = implicit_euler_solve(problem, spec, measure, k_max, TimeGrid(T, config.time.steps),
                                    solver_tol=tol.solver_tol, method=tol.solver, probes=tol.probes,
                                    seed=config.seed, operator=op)
    else:
        traj = semidiscrete_solve(problem, spec, measure, k_max, times=snapshot_times(T),
                                  stability_factor=tol.stability_factor, max_step=tol.max_step, operator=op)
    summary = {"scheme": traj.scheme, "h": spec.h, "R": spec.radius, "k_max": k_max, "times": traj.times,
               "dt_stable": stable_step(op, T, tol.stability_factor)}
    if config.problem.manufactured:
        x = spec.points
        summary["sup_err"] = max(float(np.max(np.abs(v - manufactured.exact(t, x))))
                                 for t, v in zip(traj.times, traj.values))
    if out_dir is not None:
        out_dir = Path(out_dir)
        traj.to_csv(out_dir / "trajectory.csv")
        traj.write_json(out_dir / "trajectory.json")
        traj.write_diagnostics(out_dir / "diagnostics.json")
    return {"config": config.to_dict(), "summary": summary, "diagnostics": traj.diagnostics, "passed": True}

