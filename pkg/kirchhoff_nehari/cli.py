"""
Command-line interface for Kirchhoff-Nehari.

Exit codes: 0 on success, 1 on configuration or input errors, 2 when a
descent stalls or does not converge.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .artifacts import ArtifactWriter, RunManifest
from .config import config_hash, list_presets, load_config, resolve_out_dir
from .core import KirchhoffNehariSDK
from .diagnostics import (
    DEFAULT_LADDER,
    DEFAULT_SOBOLEV_SPACING,
    SHARP_SOBOLEV_CONSTANT,
    sobolev_constant,
)
from .errors import (
    ConfigError,
    PreconditionError,
    ProjectionFailure,
    SolverStall,
    UnsupportedCheckError,
    WrongRegimeError,
)
from .field_grid import StatePair, set_deterministic
from .model import ProblemSpec, ValidationReport, validate_M, validate_V, validate_V45
from .solver import SolveReport, doubling_ladder

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_STALL = 2

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT)


def _writer(args: argparse.Namespace, hash_: str, seed: int) -> ArtifactWriter:
    command = [args.command] + [str(a) for a in args.argv]
    return ArtifactWriter(resolve_out_dir(args.out), RunManifest(hash_, command, seed))


def _certificate(
    sdk: KirchhoffNehariSDK, state: StatePair, finite_difference: bool
) -> Dict[str, Any]:
    try:
        return sdk.certificate(state, finite_difference).to_dict()
    except (PreconditionError, UnsupportedCheckError) as e:
        return {"unavailable": str(e)}


def _solve_payload(hash_: str, problem: ProblemSpec, report: SolveReport) -> Dict[str, Any]:
    payload = report.to_dict()
    payload["config_hash"] = hash_
    payload["problem"] = problem.describe()
    return payload


def cmd_solve(args: argparse.Namespace) -> int:
    sdk = KirchhoffNehariSDK.from_config(args.config, deterministic=args.deterministic)
    config = sdk.config
    assert config is not None
    writer = _writer(args, config.config_hash, config.solver.seed)

    code = EXIT_OK
    try:
        report = sdk.solve()
    except SolverStall as e:
        if e.report is None:
            print(f"❌ {e}")
            writer.finish()
            return EXIT_STALL
        report = e.report
        code = EXIT_STALL
        print(f"⚠️  Descent {report.status} after {report.iterations} iterations "
              f"(I = {report.c_N_estimate:.10g})")
    except ProjectionFailure as e:
        print(f"❌ Nehari projection failed: {e}")
        writer.finish()
        return EXIT_STALL

    if code == EXIT_OK and not report.converged:
        code = EXIT_STALL
        print(f"⚠️  Not converged after {report.iterations} iterations "
              f"(relative gradient {report.grad_norm_rel:.3e})")

    payload = _solve_payload(config.config_hash, sdk.problem, report)
    spec = sdk.problem
    if spec.p == 6 and spec.q == 6:
        payload["certificate"] = _certificate(sdk, report.state.abs(), args.finite_difference)
    writer.json("report.json", payload, "solve_report")
    writer.trace(report.energy_trace)
    writer.state(report.state)
    manifest = writer.finish()

    if code == EXIT_OK:
        print(f"✅ Ground state found: c_N ≈ {report.c_N_estimate:.12g} "
              f"({report.iterations} iterations)")
    print(f"✅ Artifacts written to {manifest.parent}")
    return code


def _mu_list(args: argparse.Namespace) -> List[float]:
    if args.mu:
        return [float(m) for m in args.mu.split(",") if m.strip()]
    return doubling_ladder(args.double_from, args.doublings)


def cmd_sweep_mu(args: argparse.Namespace) -> int:
    sdk = KirchhoffNehariSDK.from_config(args.config, deterministic=args.deterministic)
    config = sdk.config
    assert config is not None
    mus = _mu_list(args)
    sweep = sdk.sweep_mu(mus, workers=args.workers, stop_when_below=args.until_below)

    writer = _writer(args, config.config_hash, config.solver.seed)
    writer.sweep(sweep)
    writer.json("sweep.json", sweep.to_dict(), "sweep_report")
    for mu, report in sorted(sweep.reports.items()):
        payload = _solve_payload(config.config_hash, sdk.problem.with_mu(mu), report)
        writer.json(f"mu_{mu:g}/report.json", payload, "mu_report")
    writer.finish()

    for row in sweep.rows:
        mark = "✅" if row.converged else "⚠️ "
        print(f"{mark} mu={row.mu:<10g} c_N={row.c_N:<16.10g} bound={row.bound:.10g} "
              f"below={row.below_bound} [{row.status}]")
    if sweep.mu0 is None:
        print("⚠️  No mu below the level bound in this sweep")
    else:
        print(f"✅ mu0 = {sweep.mu0:g}: c_N below the level bound")
    return EXIT_OK if all(r.converged for r in sweep.rows) else EXIT_STALL


def cmd_validate(args: argparse.Namespace) -> int:
    set_deterministic(args.deterministic)
    config = load_config(args.config)
    report: ValidationReport = validate_M(config.alpha, config.beta)
    report = report.extend(validate_V(config.potentials, config.a1, config.a2, config.grid))
    if args.with_v45:
        report = report.extend(validate_V45(config.potentials, config.grid, args.finite_difference))
    print(report.format_table())

    problem_error: Optional[str] = None
    try:
        config.problem()
    except ConfigError as e:
        problem_error = str(e)
        print(f"❌ {problem_error}")

    writer = _writer(args, config.config_hash, config.solver.seed)
    payload = report.to_dict()
    payload["problem_error"] = problem_error
    writer.json("validation.json", payload, "validation_report")
    writer.finish()

    for failure in report.failures():
        print(f"❌ {failure.name} fails at {failure.counterexample}")
    if report.passed and problem_error is None:
        print("✅ All required hypotheses hold")
        return EXIT_OK
    return EXIT_CONFIG


def cmd_pohozaev(args: argparse.Namespace) -> int:
    sdk = KirchhoffNehariSDK.from_config(args.config, deterministic=args.deterministic)
    config = sdk.config
    assert config is not None
    state = sdk.load_state(args.state[0], args.state[1])
    report = sdk.pohozaev(state, args.finite_difference)

    writer = _writer(args, config.config_hash, config.solver.seed)
    writer.json("pohozaev.json", report.to_dict(), "pohozaev_report")
    writer.terms(report.term_rows())
    spec = sdk.problem
    if spec.p == 6 and spec.q == 6:
        try:
            v45 = validate_V45(spec.potentials, spec.grid, args.finite_difference)
        except UnsupportedCheckError as e:
            print(f"⚠️  Certificate skipped: {e}")
        else:
            if v45.passed and state.is_positive():
                certificate = sdk.certificate(state, args.finite_difference)
                writer.json("certificate.json", certificate.to_dict(), "certificate")
                print(f"✅ Certificate: {certificate.verdict} (Q={certificate.Q:.6e}, "
                      f"bound={certificate.pohozaev_bound:.6e}, "
                      f"lower={certificate.strict_lower:.6e})")
            else:
                print("⚠️  Certificate skipped: needs a positive state and (V4)/(V5)")
    writer.finish()
    print(f"✅ Pohozaev residual: {report.residual_abs:.6e} (relative {report.residual_rel:.3e})")
    return EXIT_OK


def cmd_sobolev(args: argparse.Namespace) -> int:
    set_deterministic(args.deterministic)
    ladder = [int(n) for n in args.ladder]
    estimate = sobolev_constant(ladder, args.spacing)
    hash_ = config_hash({"ladder": ladder, "spacing": args.spacing})
    writer = _writer(args, hash_, 0)
    writer.json("sobolev.json", estimate.to_dict(), "sobolev_estimate")
    writer.finish()
    deviation = abs(estimate.value - SHARP_SOBOLEV_CONSTANT) / SHARP_SOBOLEV_CONSTANT
    print(f"✅ S ≈ {estimate.value:.6f} ± {estimate.error:.2e} "
          f"(closed form {SHARP_SOBOLEV_CONSTANT:.6f}, deviation {deviation:.2%})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kirchhoff-nehari",
        description="Kirchhoff-Nehari - ground states of coupled Kirchhoff-Schrodinger systems",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Solve a bundled instance
  kirchhoff-nehari solve preset:decoupled --out runs/decoupled

  # Sweep mu on the critical preset, doubling from 1
  kirchhoff-nehari sweep-mu preset:critical --double-from 1 --doublings 6

  # Check the hypotheses of a configuration
  kirchhoff-nehari validate my_instance.yaml --with-v45

  # Estimate the Sobolev constant
  kirchhoff-nehari sobolev
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="Output directory (or $KIRCHHOFF_NEHARI_OUT_DIR)")
    common.add_argument("--deterministic", action="store_true",
                        help="Fixed-order reductions for reproducible reports")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    config_help = f"YAML configuration or preset:<name> ({', '.join(list_presets())})"
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    solve = subparsers.add_parser("solve", parents=[common], help="Compute a ground state")
    solve.add_argument("config", help=config_help)
    solve.add_argument("--finite-difference", action="store_true",
                       help="Allow finite-difference potential gradients in diagnostics")

    sweep = subparsers.add_parser("sweep-mu", parents=[common],
                                  help="Sweep mu and compare c_N with the level bound")
    sweep.add_argument("config", help=config_help)
    ladder = sweep.add_mutually_exclusive_group(required=True)
    ladder.add_argument("--mu", help="Comma-separated increasing mu values")
    ladder.add_argument("--double-from", type=float, help="First mu of a doubling ladder")
    sweep.add_argument("--doublings", type=int, default=5, help="Length of the doubling ladder")
    sweep.add_argument("--until-below", action="store_true",
                       help="Stop at the first mu whose level is below the bound")
    sweep.add_argument("--workers", type=int, default=1, help="Concurrent solves (cold starts)")

    validate = subparsers.add_parser("validate", parents=[common],
                                     help="Check the structural hypotheses")
    validate.add_argument("config", help=config_help)
    validate.add_argument("--with-v45", action="store_true", help="Also check (V4)/(V5)")
    validate.add_argument("--finite-difference", action="store_true",
                          help="Use finite differences for missing potential gradients")

    pohozaev = subparsers.add_parser("pohozaev", parents=[common],
                                     help="Pohozaev residual (and certificate) of a stored state")
    pohozaev.add_argument("config", help=config_help)
    pohozaev.add_argument("--state", nargs=2, required=True, metavar=("U_FILE", "V_FILE"),
                          help="Field dumps of u and v")
    pohozaev.add_argument("--finite-difference", action="store_true",
                          help="Use finite differences for missing potential gradients")

    sobolev = subparsers.add_parser("sobolev", parents=[common],
                                    help="Estimate the best Sobolev constant")
    sobolev.add_argument("--ladder", type=int, nargs="+", default=list(DEFAULT_LADDER),
                         help="Increasing grid sizes at fixed spacing")
    sobolev.add_argument("--spacing", type=float, default=DEFAULT_SOBOLEV_SPACING,
                         help="Grid spacing of the ladder")
    return parser


COMMANDS = {
    "solve": cmd_solve,
    "sweep-mu": cmd_sweep_mu,
    "validate": cmd_validate,
    "pohozaev": cmd_pohozaev,
    "sobolev": cmd_sobolev,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, execute the subcommand and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    args.argv = argv[1:]
    _setup_logging(args.verbose)

    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"❌ Invalid configuration: {e}")
        return EXIT_CONFIG
    except WrongRegimeError as e:
        print(f"❌ Wrong regime: {e}")
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"❌ File not found: {e}")
        return EXIT_CONFIG
    except ValueError as e:
        print(f"❌ Invalid parameter: {e}")
        return EXIT_CONFIG
    except SolverStall as e:
        print(f"⚠️  {e}")
        return EXIT_STALL


def main() -> None:
    """Main CLI entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
