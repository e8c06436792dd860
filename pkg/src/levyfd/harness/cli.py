"""Command line entry point: ``levyfd <command> --config study.toml --out dir``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import LevyFDError
from ..operators import SpatialOperator, build_weights
from .config import StudyConfig
from .report import dump_json
from .studies import run_convergence_space, run_convergence_time, run_operator_checks, solve

logger = logging.getLogger("levyfd")


def _load(args) -> StudyConfig:
    config = StudyConfig.load(args.config) if args.config else StudyConfig()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    return config


def _out_dir(args, config: StudyConfig) -> Path:
    out = Path(args.out or config.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    result = solve(config, out)
    dump_json(result, out / "report.json")
    summary = result["summary"]
    print(f"solve: {summary['scheme']} h={summary['h']:.6g} t in [0, {config.problem.T}]"
          + (f"  sup error vs manufactured u: {summary['sup_err']:.3e}" if "sup_err" in summary else ""))
    return 0


def cmd_converge_space(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    report = run_convergence_space(config, workers=args.workers, out_dir=out)
    report.write(out)
    print("\n".join(report.summary_lines()))
    return 0 if report.passed else 1


def cmd_converge_time(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    report = run_convergence_time(config, workers=args.workers, out_dir=out)
    report.write(out)
    print("\n".join(report.summary_lines()))
    return 0 if report.passed else 1


def cmd_check_operators(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    report = run_operator_checks(config)
    report.write(out)
    print("\n".join(report.summary_lines()))
    return 0 if report.passed else 1


def cmd_dump_matrix(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    measure = config.build_measure()
    spec = config.grid_spec(config.grid.n)
    k_max = config.reach(spec, measure)
    op = SpatialOperator(config.build_coefficients(), build_weights(measure, spec.h, k_max), spec).at(config.time.t)
    path = out / "matrix.mtx"
    op.write_triplets(path)
    dump_json({"config": config.to_dict(), "matrix": str(path.name), "size": spec.size, "nnz": op.matrix.nnz,
               "bandwidth": op.bandwidth, "row_sum_norm": op.row_sum_norm(), "passed": True}, out / "report.json")
    print(f"dump-matrix: {spec.size}x{spec.size}, {op.matrix.nnz} nonzeros, bandwidth {op.bandwidth} -> {path}")
    return 0


COMMANDS = {
    "solve": (cmd_solve, "solve one problem at one h (and tau) and write the trajectory"),
    "converge-space": (cmd_converge_space, "spatial convergence study against the manufactured solution"),
    "converge-time": (cmd_converge_time, "implicit Euler against the semidiscrete solution over a tau ladder"),
    "check-operators": (cmd_check_operators, "property checks of the discrete jump operator"),
    "dump-matrix": (cmd_dump_matrix, "write the assembled operator matrix in coordinate format"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyfd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML study file (defaults are used for missing keys)")
        p.add_argument("--out", help="output directory (default: [output] dir)")
        p.add_argument("--seed", type=int, help="seed for random probes (overrides the config)")
        p.add_argument("--workers", type=int, default=1, help="parallel ladder levels")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command][0](args)
    except LevyFDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
