"""
Command-line laboratory for the sigma_2 Hessian equation.

Each subcommand runs one experiment pipeline and writes a CSV report. Exit
codes: 0 when every contract holds, 1 on a violated contract or a laboratory
error, 2 on a usage error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from .config.settings import Settings, exit_codes, get_settings
from .exceptions import Sigma2LabError
from .schemas.lab_schemas import RunConfig, Subcommand
from .services.experiments import ExperimentRunner
from .services.reporting import write_report

logger = logging.getLogger(__name__)

# subcommands whose grid models the radius-3 ball
_RADIUS_THREE = {Subcommand.DOUBLING}


class UsageError(Exception):
    """Bad command-line input; maps to exit code 2."""


def _parse_override(text: str) -> Tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value of {name!r} is not a number: {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with the flags shared by every subcommand."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=4, help="spatial dimension")
    common.add_argument("--m", type=int, default=13, help="grid points per axis (odd)")
    common.add_argument("--seed", type=int, default=None, help="64-bit seed (default from settings)")
    common.add_argument("--case", default="quadratic", help="manufactured case")
    common.add_argument("--radius", type=float, default=None, help="grid radius")
    common.add_argument("--samples", type=int, default=1000, help="sample count")
    common.add_argument("--grid", type=int, default=4096, help="scan grid size")
    common.add_argument("--theta", type=float, default=0.01, help="theta of the polynomial scan")
    common.add_argument(
        "--set", dest="overrides", action="append", type=_parse_override, default=[],
        metavar="NAME=VALUE", help="numeric override (settings field or experiment parameter); repeatable",
    )
    common.add_argument("--grid-in", default=None, help="read the grid function from this file")
    common.add_argument("--grid-out", default=None, help="write the grid function to this file")
    common.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    common.add_argument("--log-level", default=None, help="logging level")

    parser = argparse.ArgumentParser(prog="sigma2lab", description="sigma_2 Hessian numerical laboratory")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        Subcommand.LEMMAS: "eigenvalue bounds on seeded Gamma_2 samples",
        Subcommand.POLYSCAN: "nonnegativity scan of the remainder polynomials",
        Subcommand.QFORM: "trace and determinant of the restricted quadratic form",
        Subcommand.SOLVE: "damped Newton solve of a manufactured case",
        Subcommand.JACOBI: "node-wise almost Jacobi residual",
        Subcommand.DOUBLING: "doubling ratio of the Laplacian",
        Subcommand.WOLFF: "Wolff potentials of density measures",
        Subcommand.SEMINORMS: "weighted seminorms and the interpolation inequality",
        Subcommand.HARNACK: "Harnack-type sup/inf control",
        Subcommand.OSCILLATION: "oscillation decay",
    }
    for cmd, text in helps.items():
        sub.add_parser(cmd.value, parents=[common], help=text)
    return parser


def _split_overrides(
    pairs: Sequence[Tuple[str, float]], settings: Settings
) -> Tuple[Settings, Dict[str, float]]:
    """Route NAME=VALUE pairs to settings fields or to experiment parameters."""
    updates: Dict[str, object] = {}
    params: Dict[str, float] = {}
    fields = type(settings).model_fields
    for name, value in pairs:
        if name in fields:
            current = getattr(settings, name)
            if isinstance(current, bool) or not isinstance(current, (int, float)):
                raise UsageError(f"setting {name!r} is not numeric")
            if isinstance(current, int) and not float(value).is_integer():
                raise UsageError(f"setting {name!r} expects an integer, got {value}")
            updates[name] = type(current)(value)
        else:
            params[name] = value
    return (settings.model_copy(update=updates) if updates else settings), params


def resolve_config(args: argparse.Namespace, settings: Settings) -> Tuple[RunConfig, Settings]:
    cmd = Subcommand(args.subcommand)
    settings, params = _split_overrides(args.overrides, settings)
    radius = args.radius
    if radius is None:
        radius = 3.0 if cmd in _RADIUS_THREE else settings.grid_radius
    try:
        cfg = RunConfig(
            subcommand=cmd,
            n=args.n,
            m=args.m,
            seed=settings.default_seed if args.seed is None else args.seed,
            case=args.case,
            radius=radius,
            samples=args.samples,
            grid=args.grid,
            theta=args.theta,
            overrides=params,
            grid_in=args.grid_in,
            grid_out=args.grid_out,
            out=args.out,
        )
    except ValidationError as e:
        raise UsageError(str(e)) from e
    return cfg, settings


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        return int(e.code or 0)

    base = get_settings()
    base.setup_logging(args.log_level)
    try:
        cfg, settings = resolve_config(args, base)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"sigma2lab: error: {e}", file=sys.stderr)
        return exit_codes.USAGE

    try:
        report = ExperimentRunner(settings).run(cfg)
        write_report(report, cfg.out)
    except Sigma2LabError as e:
        logger.error(f"{cfg.subcommand.value} failed ({e.kind}): {e.message}")
        print(f"sigma2lab: {exit_codes.get_message(e.kind)} {e.message}", file=sys.stderr)
        return exit_codes.get_code(e.kind)

    if report.violations:
        logger.warning(f"{report.name}: {report.violations} contract violations")
        return exit_codes.VIOLATION
    logger.info(f"{report.name}: all contracts satisfied")
    return exit_codes.OK


def suite_commands(quick: bool = False) -> List[Tuple[str, List[str]]]:
    """Acceptance battery as (label, argv) pairs."""
    big = "2000" if quick else "100000"
    commands: List[Tuple[str, List[str]]] = []
    for n in range(3, 9):
        commands.append((f"lemmas_n{n}", ["lemmas", "--n", str(n), "--samples", big, "--seed", "42"]))
    for n in range(4, 11):
        commands.append((f"polyscan_n{n}", ["polyscan", "--n", str(n), "--grid", "4096", "--theta", "0.01"]))
    for n in range(4, 9):
        commands.append((f"qform_n{n}", ["qform", "--n", str(n), "--samples", big, "--seed", "42"]))
    commands.append(("qform_control_n6", ["qform", "--n", "6", "--samples", "2000", "--seed", "42", "--set", "control=1"]))
    commands.append(("solve_quadratic_n4", ["solve", "--n", "4", "--m", "13", "--case", "quadratic"]))
    # refinement pairs (m, 2m - 1)
    for case, n, ms in (("exp", 2, (17, 33)), ("exp", 3, (9, 17)), ("exp", 4, (7, 13)), ("coupled", 4, (7, 13))):
        for m in ms:
            commands.append((f"solve_{case}_n{n}_m{m}", ["solve", "--n", str(n), "--m", str(m), "--case", case]))
    jm = "9" if quick else "11"
    commands.append(("jacobi_quartic_n4", ["jacobi", "--n", "4", "--m", jm, "--case", "quartic"]))
    commands.append(("jacobi_control_n4", ["jacobi", "--n", "4", "--m", jm, "--case", "quartic", "--set", "control=1"]))
    for m in ("7", "13"):
        commands.append((f"jacobi_exp_n4_m{m}", ["jacobi", "--n", "4", "--m", m, "--case", "exp"]))
    commands.append(("doubling_quadratic_n3", ["doubling", "--n", "3", "--m", "13", "--case", "quadratic"]))
    commands.append(("doubling_exp_n3", ["doubling", "--n", "3", "--m", "13" if quick else "25", "--case", "exp"]))
    commands.append(("wolff_n4", ["wolff", "--n", "4", "--m", "13", "--case", "exp"]))
    commands.append(("seminorms_n4", ["seminorms", "--n", "4", "--m", "13", "--case", "exp"]))
    for m in ("45", "89"):
        commands.append((f"harnack_n2_m{m}", ["harnack", "--n", "2", "--m", m, "--case", "exp"]))
    commands.append(("oscillation_n2", ["oscillation", "--n", "2", "--m", "45", "--case", "exp"]))
    return commands


def run_suite(out_dir: str = "reports", quick: bool = False) -> int:
    """Run the acceptance battery, one CSV per command; returns the worst exit code."""
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    worst = exit_codes.OK
    for label, argv in suite_commands(quick):
        code = run(argv + ["--out", str(target / f"{label}.csv")])
        if code != exit_codes.OK:
            logger.warning(f"Suite command {label} exited with {code}")
        worst = max(worst, code)
    logger.info(f"Suite finished with exit code {worst}")
    return worst


def main() -> None:
    sys.exit(run())
