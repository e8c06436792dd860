import csv
import json
import pickle

import numpy as np
import pytest

from levyfd.errors import ConfigError
from levyfd.harness.cli import main
from levyfd.harness.config import StudyConfig
from levyfd.harness.expr import Expression
from levyfd.harness.report import ConvergenceReport
from levyfd.harness.studies import (dropped_gain_mass, fit_rate, run_convergence_space, run_convergence_time,
                                    run_operator_checks, time_case)
from levyfd.grid import GridSpec
from levyfd.levy import PowerLaw

SMALL = """
seed = 3

[problem]
profile = "poly"
radius = 1.0
time_factor = "exp"
T = 0.25

[coefficients]
a = "0.5 * minimum(x**2, 1)"
c = "-0.5"

[measure]
family = "tempered"
alpha = 0.5
lam = 1.0

[grid]
n = 4
ladder = [2, 4, 8]

[time]
steps = 4
ladder = [2, 4, 8]

[operators]
samples = 3
families = ["power_law"]
nsd_n = [4]
stencil_inputs = 3
stencil_n = [4]
theta_max = 8
consistency_n = [4, 8, 16]
consistency_slope = 0.0
consistency_r2 = 0.0
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def strip_runtime(obj):
    if isinstance(obj, dict):
        return {k: strip_runtime(v) for k, v in obj.items() if not k.startswith("runtime")}
    if isinstance(obj, list):
        return [strip_runtime(v) for v in obj]
    return obj


# -- rate fitting ----------------------------------------------------------


def test_fit_rate_examples():
    fit = fit_rate([(0.1, 0.1), (0.05, 0.05), (0.025, 0.025)])
    assert fit.status == "ok" and fit.slope == pytest.approx(1.0) and fit.r2 == pytest.approx(1.0)
    assert fit_rate([(0.1, 0.01), (0.05, 0.0025), (0.025, 0.000625)]).slope == pytest.approx(2.0)
    assert fit_rate([(0.1, 0.1), (0.05, 0.05)]).status == "insufficient-data"
    assert fit_rate([(0.1, 0.1), (0.1, 0.2), (0.05, 0.05)]).status == "insufficient-data"
    assert fit_rate([(0.1, 0.0), (0.05, 0.0), (0.025, 0.0)]).status == "exact"
    noisy = fit_rate([(0.1, 0.1), (0.05, 0.06), (0.025, 0.02), (0.0125, 0.012)])
    assert 0 < noisy.r2 < 1


# -- expressions and config ------------------------------------------------


def test_expression_evaluates_vectorized():
    f = Expression("0.5 * (1 + t) * minimum(x**2, 1) + where(x > 0, 1, 0)")
    x = np.array([-2.0, 0.5, 3.0])
    assert np.allclose(f(1.0, x), [1.0, 1.25, 2.0])
    assert Expression(2)(0.0, x).tolist() == [2.0, 2.0, 2.0]
    assert pickle.loads(pickle.dumps(f))(1.0, x).tolist() == f(1.0, x).tolist()


@pytest.mark.parametrize("source", ["__import__('os')", "x.real", "x[0]", "open('f')", "y + 1", "'a'",
                                    "lambda: 1", "[x]", "x if t else 1", "1 +"])
def test_expression_rejects_unsafe_or_unknown(source):
    with pytest.raises(ConfigError):
        Expression(source)


def test_config_defaults_and_unknown_keys():
    config = StudyConfig()
    assert config.grid.ladder == [8, 16, 32, 64] and config.thresholds.space_slope == 0.9
    assert config.window_radius == 2.0 and config.to_dict()["grid"]["R"] == 2.0
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({"grid": {"spacing": 0.1}})
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({"extras": {}})
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({"grid": {"ladder": [8, 0]}})
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({"measure": {"family": "power_law", "beta": 1}})
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({"time": {"scheme": "crank-nicolson"}})


def test_config_window_validation():
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({"problem": {"radius": 2.0}, "grid": {"R": 2.5}})
    with pytest.raises(Exception):
        StudyConfig.from_dict({"grid": {"R": 2.3, "ladder": [8]}})
    ok = StudyConfig.from_dict({"problem": {"radius": 2.0}, "grid": {"R": 3.0}})
    assert ok.grid_spec(4) == GridSpec(4, 12)


def test_config_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        StudyConfig.load(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid\n")
    with pytest.raises(ConfigError):
        StudyConfig.load(bad)


def test_reach_modes():
    spec = GridSpec(4, 8)
    full = StudyConfig()
    assert full.reach(spec, PowerLaw(0.5)) == 16
    tail = StudyConfig.from_dict({"grid": {"reach": "tail"}, "tolerances": {"eps_tail": 0.5}})
    assert tail.reach(spec, PowerLaw(0.5)) == 8  # tail mass 2/(1.5 r^1.5) <= 0.5 needs r >= 1.923
    assert dropped_gain_mass(PowerLaw(0.5), spec, 16, 1.0) == 0.0
    assert dropped_gain_mass(PowerLaw(0.5), spec, 8, 1.0) == pytest.approx(PowerLaw(0.5).tail_mass(2.0))


def test_time_case_prediction():
    smooth = StudyConfig.from_dict({"problem": {"profile": "poly", "power": 6, "gamma": 2.0}})
    assert time_case(smooth) == ("ii", 1.0)
    rough = StudyConfig.from_dict({"problem": {"profile": "poly", "power": 6, "gamma": 1.0}})
    assert time_case(rough) == ("ii", 0.5)
    low = StudyConfig.from_dict({"problem": {"profile": "poly", "power": 3, "gamma": 2.0}})
    assert time_case(low) == ("i", 0.5)


# -- reports ---------------------------------------------------------------


def test_report_statuses():
    def level(h, err, budget):
        return {"h": h, "status": "ok", "sup_err": err, "l2_err": err, "budget": {"total": budget}}

    rep = ConvergenceReport("converge-space", {}, "h", [level(0.5, 0.5, 0), level(0.25, 0.25, 0),
                                                       level(0.125, 0.125, 0)], 1.0, 0.9).finalize()
    assert rep.passed and rep.fits["sup"]["slope"] == pytest.approx(1.0)
    tiny = [level(h, 1e-12, 1e-12) for h in (0.5, 0.25, 0.125)]
    rep = ConvergenceReport("converge-space", {}, "h", tiny, 1.0, 0.9).finalize()
    assert rep.passed and rep.fits["sup"]["status"] == "within-tolerance"
    noise = [level(h, 5e-12, 1e-12) for h in (0.5, 0.25, 0.125)]
    rep = ConvergenceReport("converge-space", {}, "h", noise, 1.0, 0.9).finalize()
    assert not rep.passed and rep.fits["l2"]["status"] == "budget-contaminated"
    failed = [level(0.5, 0.5, 0), {"h": 0.25, "status": "failed", "error": "boom"}, level(0.125, 0.125, 0)]
    rep = ConvergenceReport("converge-space", {}, "h", failed, 1.0, 0.9).finalize()
    assert not rep.passed and rep.fits["sup"]["status"] == "level-failed"
    slow = [level(0.5, 0.5, 0), level(0.25, 0.35, 0), level(0.125, 0.25, 0)]
    assert not ConvergenceReport("converge-space", {}, "h", slow, 1.0, 0.9).finalize().passed


# -- trivial studies ---------------------------------------------------------


def test_static_profile_with_zero_operator_is_exact():
    config = StudyConfig.from_dict({"problem": {"profile": "poly", "T": 0.25},
                                    "grid": {"ladder": [2, 4, 8], "n": 4}, "time": {"ladder": [2, 4, 8]}})
    space = run_convergence_space(config)
    assert space.passed and {f["status"] for f in space.fits.values()} == {"exact"}
    time_report = run_convergence_time(config)
    assert time_report.passed and time_report.fits["l2"]["status"] == "exact"


def test_study_reports_are_reproducible(small_config, tmp_path):
    config = StudyConfig.load(small_config)
    a = run_convergence_time(config, out_dir=tmp_path)
    b = run_convergence_time(config)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    assert strip_runtime(ra) == strip_runtime(rb)
    assert (tmp_path / "oracle_semidiscrete.csv").exists()
    rows = list(csv.DictReader(open(tmp_path / "a" / "errors.csv")))
    assert [r["level"] for r in rows] == ["0", "1", "2"]
    assert float(rows[0]["tau"]) == 0.125 and rows[0]["h"] == "0.25"
    assert ra["case"] == "ii" and ra["predicted_rate"] == 1.0


def test_operator_checks_on_small_config(small_config):
    report = run_operator_checks(StudyConfig.load(small_config))
    names = [p.name for p in report.properties]
    assert names == ["negative-semidefinite", "collapsed-stencil", "theta-closure", "operator-consistency",
                     "no-blowup"]
    assert report.by_name("theta-closure").passed and report.by_name("negative-semidefinite").passed
    assert report.by_name("collapsed-stencil").passed
    with pytest.raises(KeyError):
        report.by_name("missing")


# -- command line ------------------------------------------------------------


def test_cli_solve(small_config, tmp_path, capsys):
    out = tmp_path / "solve"
    assert main(["solve", "--config", str(small_config), "--out", str(out)]) == 0
    for name in ("trajectory.csv", "trajectory.json", "diagnostics.json", "report.json"):
        assert (out / name).exists()
    report = json.loads((out / "report.json").read_text())
    assert report["summary"]["scheme"] == "implicit-euler" and report["passed"] is True
    assert len(report["summary"]["times"]) == 5
    assert "solve: implicit-euler" in capsys.readouterr().out


def test_cli_dump_matrix(small_config, tmp_path):
    out = tmp_path / "dump"
    assert main(["dump-matrix", "--config", str(small_config), "--out", str(out)]) == 0
    header = (out / "matrix.mtx").read_text().splitlines()[:3]
    assert header[0].startswith("%%MatrixMarket")
    assert header[2].split()[:2] == ["17", "17"]


def test_cli_check_operators_and_exit_codes(small_config, tmp_path):
    assert main(["check-operators", "--config", str(small_config), "--out", str(tmp_path / "ops")]) == 0
    report = json.loads((tmp_path / "ops" / "report.json").read_text())
    assert report["passed"] is True and len(report["properties"]) == 5
    strict = tmp_path / "strict.toml"
    strict.write_text(SMALL.replace("consistency_slope = 0.0", "consistency_slope = 5.0"))
    assert main(["check-operators", "--config", str(strict), "--out", str(tmp_path / "strict")]) == 1
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid]\nladder = [3.5]\n")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "bad")]) == 2
    assert main(["solve", "--config", str(small_config), "--seed", "-1"]) == 2


def test_cli_converge_time_writes_outputs(small_config, tmp_path):
    out = tmp_path / "time"
    code = main(["converge-time", "--config", str(small_config), "--out", str(out), "--workers", "2"])
    report = json.loads((out / "report.json").read_text())
    assert code == (0 if report["passed"] else 1)
    assert (out / "errors.csv").exists() and (out / "oracle_semidiscrete.csv").exists()
