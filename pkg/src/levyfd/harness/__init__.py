"""Convergence studies, operator checks and the ``levyfd`` command line."""

from .config import StudyConfig
from .report import ConvergenceReport, OperatorReport
from .studies import fit_rate, run_convergence_space, run_convergence_time, run_operator_checks, solve
