"""Acceptance criteria, one test each, at the stated tolerances and time limits.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
import scipy.linalg

from levyfd.grid import GridFunction, GridSpec, norm_l2
from levyfd.harness.config import StudyConfig
from levyfd.harness.expr import Expression
from levyfd.harness.studies import (check_collapsed_stencil, check_consistency, check_negative_semidefinite,
                                    check_no_blowup, check_theta_closure, consistency_levels, run_convergence_space,
                                    run_convergence_time)
from levyfd.integrator import ProblemSpec, TimeGrid, implicit_euler_solve, semidiscrete_solve
from levyfd.levy import make_measure, zero_measure
from levyfd.operators import CoefficientSet, SpatialOperator, build_weights


def timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def operator_config(configs_dir):
    return StudyConfig.load(configs_dir / "operators.toml")


@pytest.fixture(scope="module")
def consistency(operator_config):
    return timed(consistency_levels, operator_config)


def test_01_negative_semidefinite(operator_config, record_criterion):
    ops = operator_config.operators
    assert ops.samples >= 100 and len(ops.families) >= 3 and ops.nsd_n == [8, 16, 32]
    result, seconds = timed(check_negative_semidefinite, operator_config, operator_config.seed)
    passed = result.passed and ops.nsd_tol <= 1e-10 and seconds <= 10
    record_criterion(1, "negative semi-definiteness", passed, f"{result.detail}; {seconds:.1f} s (limit 10 s)")
    assert passed


def test_02_collapsed_stencil(operator_config, record_criterion):
    ops = operator_config.operators
    assert ops.stencil_inputs >= 50 and ops.stencil_n == [4, 8, 16, 32]
    result, seconds = timed(check_collapsed_stencil, operator_config, operator_config.seed)
    passed = result.passed and ops.stencil_tol <= 1e-12 and seconds <= 10
    record_criterion(2, "collapsed-stencil identity", passed, f"{result.detail}; {seconds:.1f} s (limit 10 s)")
    assert passed


def test_03_theta_closure(operator_config, record_criterion):
    assert operator_config.operators.theta_max >= 64
    result, seconds = timed(check_theta_closure, operator_config)
    passed = result.passed and seconds <= 1
    record_criterion(3, "theta-weight closure", passed, f"{result.detail}; {seconds:.3f} s (limit 1 s)")
    assert passed


def test_04_operator_consistency(operator_config, consistency, record_criterion):
    levels, seconds = consistency
    assert [lv["n"] for lv in levels] == [8, 16, 32, 64]
    assert operator_config.measure == {"family": "power_law", "alpha": 0.5}
    result = check_consistency(operator_config, levels)
    fit = result.witness["fit"]
    passed = result.passed and fit["slope"] >= 0.9 and fit["r2"] >= 0.98 and seconds <= 60
    record_criterion(4, "operator consistency", passed,
                     f"slope {fit['slope']:.4f} (>= 0.9), R^2 {fit['r2']:.5f} (>= 0.98); "
                     f"{seconds:.1f} s (limit 60 s)")
    assert passed


def test_05_no_blowup(operator_config, consistency, record_criterion):
    levels, seconds = consistency
    result = check_no_blowup(operator_config, levels)
    variation = result.witness["variation"]
    passed = result.passed and variation <= 0.10 and seconds <= 30
    record_criterion(5, "no blow-up across h", passed,
                     f"|J^h phi|_l2 variation {variation:.2%} (<= 10%); {seconds:.1f} s (limit 30 s)")
    assert passed


def _fit_detail(report, norms):
    parts = []
    for norm in norms:
        fit = report.fits[norm]
        parts.append(f"{norm} slope {fit['slope']:.3f}" if fit["status"] == "ok" else f"{norm} {fit['status']}")
    return ", ".join(parts)


@pytest.mark.slow
def test_06_spatial_convergence(configs_dir, tmp_path, record_criterion):
    config = StudyConfig.load(configs_dir / "space_degenerate.toml")
    assert config.grid.ladder == [8, 16, 32, 64] and config.problem.T == 0.5
    assert config.measure == {"family": "power_law", "alpha": 0.5}
    assert (config.coefficients.a, config.coefficients.b, config.coefficients.c) == ("minimum(x**2, 1)", "0", "0")
    report, seconds = timed(run_convergence_space, config, 1, tmp_path)
    fits_ok = all(report.fits[n]["status"] == "ok" and report.fits[n]["slope"] >= 0.9 for n in ("sup", "l2"))
    passed = report.passed and fits_ok and seconds <= 600
    record_criterion(6, "spatial convergence", passed,
                     f"{_fit_detail(report, ('sup', 'l2'))} (>= 0.9); {seconds:.0f} s (limit 600 s)")
    assert passed


@pytest.mark.slow
def test_07_temporal_convergence_smooth(configs_dir, tmp_path, record_criterion):
    config = StudyConfig.load(configs_dir / "time_smooth.toml")
    assert config.grid.n == 32 and config.time.ladder == [8, 16, 32, 64]
    assert config.build_profile().smoothness >= 5 and config.problem.gamma == 2.0
    report, seconds = timed(run_convergence_time, config, 1, tmp_path)
    fit = report.fits["l2"]
    passed = report.passed and fit["status"] == "ok" and fit["slope"] >= 0.9 and seconds <= 600
    record_criterion(7, "temporal convergence (smooth)", passed,
                     f"{_fit_detail(report, ('l2',))} (>= 0.9); {seconds:.0f} s (limit 600 s)")
    assert passed


@pytest.mark.slow
def test_08_temporal_convergence_rough(configs_dir, tmp_path, record_criterion):
    config = StudyConfig.load(configs_dir / "time_rough.toml")
    assert "sqrt(t)" in config.coefficients.b and config.thresholds.time_slope == 0.2
    report, seconds = timed(run_convergence_time, config, 1, tmp_path)
    fit = report.fits["l2"]
    passed = report.passed and fit["status"] == "ok" and fit["slope"] >= 0.2 and seconds <= 600
    record_criterion(8, "temporal convergence (rough in time)", passed,
                     f"{_fit_detail(report, ('l2',))} (>= 0.2, predicted {report.predicted_rate:g}); "
                     f"{seconds:.0f} s (limit 600 s)")
    assert passed


DISSIPATIVE = [
    ("a=1, c=-0.5, power law", "1", "-0.5", {"family": "power_law", "alpha": 0.5}),
    ("a=0, c=-1, tempered", "0", "-1", {"family": "tempered", "alpha": 0.5, "lam": 1.0}),
    ("a=min(x^2,1), c=-1.5, compound Poisson", "minimum(x**2, 1)", "-1.5",
     {"family": "compound_poisson", "rate": 2.0, "lo": -2.5, "hi": 2.5}),
]
PAIRS = [(8, 10), (16, 20), (32, 40)]  # (n, steps) with T = 0.5


def test_09_implicit_dissipativity(record_criterion):
    start = time.perf_counter()
    worst_growth, worst_residual, worst_eig = -math.inf, 0.0, -math.inf
    T = 0.5
    for _, a, c, measure_params in DISSIPATIVE:
        params = dict(measure_params)
        measure = make_measure(params.pop("family"), **params)
        coeffs = CoefficientSet(Expression(a), Expression("0"), Expression(c))
        problem = ProblemSpec(coeffs, lambda x: np.exp(-4 * x**2) * (np.abs(x) < 1.5), T)
        for n, steps in PAIRS:
            spec = GridSpec(n, 3 * n)
            op = SpatialOperator(coeffs, build_weights(measure, spec.h, 2 * spec.m), spec)
            grid = TimeGrid(T, steps)
            # the invariant needs a dissipative operator: check it before testing the trajectory
            for t in grid.knots[1:]:
                sym = op.at(t).matrix.toarray()
                top = float(scipy.linalg.eigvalsh((sym + sym.T) / 2)[-1])
                worst_eig = max(worst_eig, top)
            traj = implicit_euler_solve(problem, spec, measure, 2 * spec.m, grid, solver_tol=1e-10, operator=op)
            norms = [norm_l2(GridFunction(spec, v)) for v in traj.values]
            worst_growth = max(worst_growth, max(b - a_ for a_, b in zip(norms, norms[1:])))
            worst_residual = max(worst_residual, max(traj.diagnostics["relative_residuals"]))
    seconds = time.perf_counter() - start
    passed = worst_eig <= 1e-10 and worst_growth <= 1e-8 and worst_residual <= 1e-10 and seconds <= 300
    record_criterion(9, "implicit solvability and dissipativity", passed,
                     f"max per-step norm change {worst_growth:.2e} (<= 1e-8), max relative residual "
                     f"{worst_residual:.2e} (<= 1e-10), top symmetric eigenvalue {worst_eig:.2e} (<= 0) over "
                     f"3 problems x 3 (h, tau); {seconds:.1f} s (limit 300 s)")
    assert passed


def test_10_scalar_decay_oracle(record_criterion):
    start = time.perf_counter()
    spec = GridSpec(8, 16)
    psi = lambda x: np.exp(-4 * x**2) * (np.abs(x) < 1.5)
    problem = ProblemSpec(CoefficientSet.constant(c=-1.0), psi, 1.0)
    times = [0.25, 0.5, 0.75, 1.0]
    semi = semidiscrete_solve(problem, spec, zero_measure(), 2 * spec.m, times=times)
    x = spec.points
    semi_err = max(float(np.max(np.abs(v - math.exp(-t) * psi(x)))) for t, v in zip(semi.times, semi.values))
    solver_tol = 1e-10
    steps = 20
    tau = 1.0 / steps
    implicit = implicit_euler_solve(problem, spec, zero_measure(), 2 * spec.m, TimeGrid(1.0, steps),
                                    solver_tol=solver_tol)
    impl_err = max(float(np.max(np.abs(v - psi(x) * (1 + tau) ** -i))) for i, v in enumerate(implicit.values))
    # each solve meets tol (1 + |rhs|); the errors add up over the steps
    impl_bound = steps * solver_tol * (1 + float(np.max(np.abs(psi(x)))))
    seconds = time.perf_counter() - start
    passed = semi_err <= 1e-8 and impl_err <= impl_bound and seconds <= 10
    record_criterion(10, "scalar-decay oracle", passed,
                     f"semidiscrete vs e^-t {semi_err:.2e} (<= 1e-8), implicit vs (1+tau)^-i {impl_err:.2e} "
                     f"(<= {impl_bound:.1e}); {seconds:.2f} s (limit 10 s)")
    assert passed
