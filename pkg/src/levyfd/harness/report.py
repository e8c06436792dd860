"""Report assembly and emission (``report.json``, ``errors.csv``).

``report.json`` layout for convergence studies::

    study          "converge-space" | "converge-time"
    config         the full resolved configuration
    parameter      "h" or "tau" (abscissa of the fit)
    levels         per level: n, h, tau (, steps), status, sup_err, l2_err,
                   budget {quadrature, tail, rk, solver, total}, contaminated,
                   diagnostics, runtime_s
    fits           {"sup": fit, "l2": fit}; fit = slope, intercept, r2, status, levels
    predicted_rate, threshold, r2_threshold, budget_factor, asserted, passed

Fields named ``runtime*`` are the only ones that differ between runs of the
same configuration.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PASSING_STATUSES = ("exact", "within-tolerance")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj, path: str | Path):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


@dataclass
class ConvergenceReport:
    study: str
    config: dict
    parameter: str
    levels: list[dict]
    predicted_rate: float
    threshold: float
    r2_threshold: float | None = None
    budget_factor: float = 10.0
    asserted: tuple[str, ...] = ("sup", "l2")
    fits: dict = field(default_factory=dict)
    passed: bool = False
    extra: dict = field(default_factory=dict)

    def finalize(self):
        from .studies import fit_rate

        ok = [lv for lv in self.levels if lv.get("status") == "ok"]
        for lv in ok:
            total = lv.get("budget", {}).get("total", 0.0)
            lv["contaminated"] = bool(lv["sup_err"] < self.budget_factor * total)
        failed = [lv for lv in self.levels if lv.get("status") == "failed"]
        usable = [lv for lv in ok if not lv["contaminated"]]
        self.fits = {}
        for norm in ("sup", "l2"):
            key = f"{norm}_err"
            if failed:
                status = {"slope": None, "intercept": None, "r2": None, "status": "level-failed", "levels": 0}
            elif ok and not usable:
                inside = all(lv[key] <= max(lv.get("budget", {}).get("total", 0.0), 0.0) for lv in ok)
                exact = all(lv[key] == 0.0 for lv in ok)
                label = "exact" if exact else ("within-tolerance" if inside else "budget-contaminated")
                status = {"slope": None, "intercept": None, "r2": None, "status": label, "levels": 0}
            else:
                status = fit_rate([(lv[self.parameter], lv[key]) for lv in usable]).to_dict()
            self.fits[norm] = status
        self.passed = all(self._fit_passes(self.fits[norm]) for norm in self.asserted)
        return self

    def _fit_passes(self, fit: dict) -> bool:
        if fit["status"] in PASSING_STATUSES:
            return True
        if fit["status"] != "ok":
            return False
        if fit["slope"] < self.threshold:
            return False
        return self.r2_threshold is None or fit["r2"] >= self.r2_threshold

    def to_dict(self) -> dict:
        return {
            "study": self.study,
            "config": self.config,
            "parameter": self.parameter,
            "levels": self.levels,
            "fits": self.fits,
            "predicted_rate": self.predicted_rate,
            "threshold": self.threshold,
            "r2_threshold": self.r2_threshold,
            "budget_factor": self.budget_factor,
            "asserted": list(self.asserted),
            "passed": self.passed,
            **self.extra,
        }

    def error_rows(self) -> list[dict]:
        return [{"level": i, "h": lv.get("h"), "tau": lv.get("tau"), "sup_err": lv.get("sup_err"),
                 "l2_err": lv.get("l2_err")} for i, lv in enumerate(self.levels)]

    def write(self, out_dir: str | Path):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_json(self.to_dict(), out_dir / "report.json")
        with open(out_dir / "errors.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["level", "h", "tau", "sup_err", "l2_err"])
            writer.writeheader()
            for row in self.error_rows():
                writer.writerow({k: ("" if v is None else str(v) if k == "level" else repr(float(v)))
                                 for k, v in row.items()})

    def summary_lines(self) -> list[str]:
        lines = [f"{self.study}: {'PASS' if self.passed else 'FAIL'} "
                 f"(threshold {self.threshold:.3g}, predicted {self.predicted_rate:.3g})"]
        for lv in self.levels:
            if lv.get("status") == "ok":
                flag = " [budget-contaminated]" if lv.get("contaminated") else ""
                lines.append(f"  {self.parameter}={lv[self.parameter]:.6g}  sup={lv['sup_err']:.3e}  "
                             f"l2={lv['l2_err']:.3e}{flag}")
            else:
                lines.append(f"  {self.parameter}={lv.get(self.parameter)}  {lv.get('status')}: {lv.get('error')}")
        for norm, fit in self.fits.items():
            if fit["status"] == "ok":
                lines.append(f"  {norm}: slope {fit['slope']:.3f}  R^2 {fit['r2']:.4f}")
            else:
                lines.append(f"  {norm}: {fit['status']}")
        return lines


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str
    witness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail, "witness": self.witness}


@dataclass
class OperatorReport:
    config: dict
    properties: list[PropertyResult]
    runtime: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties)

    def by_name(self, name: str) -> PropertyResult:
        for p in self.properties:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"study": "check-operators", "config": self.config,
                "properties": [p.to_dict() for p in self.properties], "passed": self.passed,
                "runtime": self.runtime}

    def write(self, out_dir: str | Path):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_json(self.to_dict(), out_dir / "report.json")

    def summary_lines(self) -> list[str]:
        lines = [f"check-operators: {'PASS' if self.passed else 'FAIL'}"]
        lines += [f"  [{'pass' if p.passed else 'FAIL'}] {p.name}: {p.detail}" for p in self.properties]
        return lines
