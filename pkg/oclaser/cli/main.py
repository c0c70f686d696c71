from argparse import ArgumentParser, Namespace
from typing import List, Optional
import logging
import sys
import warnings

from ..utils.common import get_logger, set_log_level
from ..utils.errors import OclaserError, ConfigError, ParameterError, SolverError, PhysicsWarning
from ..utils.schedule import SWEEPABLE
from .loops import LOOPS, EXIT_USAGE, EXIT_SOLVER

logger = get_logger(__name__)


class _Parser(ArgumentParser):
    # usage errors exit through the same path as config errors
    def error(self, message: str) -> None:
        raise ConfigError(message)


def _add_common(parser: ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("--config", type=str, required=config_required, help="scenario YAML file")
    parser.add_argument("--out", type=str, default=None, help="output directory (default: `out` key of the config)")
    parser.add_argument(
        "--set", type=str, nargs="*", default=None, metavar="KEY=VALUE",
        help="override scenario keys, e.g. --set gamma12=4 pump_ratio=2"
    )


def parse_args(argv: Optional[List[str]] = None) -> Namespace:
    parser = _Parser(prog="oclaser", description="Two-mode open-cavity laser: steady states, dynamics and sweeps.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    steady = sub.add_parser("steady", help="steady state, observables and photon distributions")
    _add_common(steady)

    evolve = sub.add_parser("evolve", help="integrate the diagonal sector from a Fock state")
    _add_common(evolve)
    evolve.add_argument("--t-end", type=float, required=True)
    evolve.add_argument("--initial-n", type=int, default=0, help="initial alpha photon number")
    evolve.add_argument("--samples", type=int, default=101)
    evolve.add_argument("--method", type=str, default="RK45", choices=["RK45", "DOP853", "BDF", "LSODA"])

    sweep = sub.add_parser("sweep", help="observables across a one-parameter sweep")
    _add_common(sweep)
    sweep.add_argument("--param", type=str, required=True, choices=list(SWEEPABLE))
    sweep.add_argument("--from", dest="start", type=float, required=True)
    sweep.add_argument("--to", dest="stop", type=float, required=True)
    sweep.add_argument("--steps", type=int, required=True)
    sweep.add_argument("--scale", type=str, default="linear", choices=["linear", "log"])
    sweep.add_argument("--column", type=str, default="nbar_alpha", help="report column plotted against the sweep")
    sweep.add_argument("--threads", type=int, default=1)

    width = sub.add_parser("linewidth", help="fit decay and frequency of the first coherence block")
    _add_common(width)
    width.add_argument("--samples", type=int, default=2000)
    width.add_argument("--method", type=str, default="BDF", choices=["RK45", "DOP853", "BDF", "LSODA"])

    validate = sub.add_parser("validate", help="run the acceptance suite")
    _add_common(validate, config_required=False)

    figures = sub.add_parser("figures", help="regenerate the data and plots of the standard figures")
    _add_common(figures)

    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        raise ConfigError(f"--threads must be >= 1, got {args.threads}")
    return args


def _report_error(e: BaseException) -> None:
    message = str(e).replace('"', "'")
    print(f'error={type(e).__name__} message="{message}"', file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as e:
        _report_error(e)
        return EXIT_USAGE
    if args.verbose:
        set_log_level(logging.DEBUG if args.verbose > 1 else logging.INFO)
    warnings.simplefilter("default", PhysicsWarning)

    try:
        loop = LOOPS[args.command](args)
        return loop.run()
    except (ConfigError, ParameterError) as e:
        _report_error(e)
        return EXIT_USAGE
    except SolverError as e:
        _report_error(e)
        return EXIT_SOLVER
    except OclaserError as e:
        _report_error(e)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
