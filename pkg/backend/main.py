"""
Command-line entry point: ``python -m backend.main <subcommand> [flags]``.

Tabular results go to stdout as CSV (JSON lines with --json); logs and
status lines go to stderr. Exit codes: 0 success, 2 config error,
3 numeric or dimension-cap error, 4 failed check.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

from backend.config import config
from backend.config.settings import settings
from backend.services.errors import ConfigError, SteinLabError
from backend.services.experiment_service import RunResult, experiment_service, parse_config
from backend.services.file_handler import dumps, dumps_line, format_csv, load_json

logger = logging.getLogger("backend.main")


def _complex_pair(text: str) -> Tuple[float, float]:
    try:
        re, im = (float(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected RE,IM, got {text!r}") from exc
    return re, im


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


# ============================================================================
# PARSER
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config; flags override its fields")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--json", action="store_true", dest="json_lines", help="emit JSON lines on stdout")
    common.add_argument("--out", help="result JSON path")
    common.add_argument("--csv", help="CSV path")
    common.add_argument("--out-dir", help=f"artifact directory (default {settings.output_dir})")
    common.add_argument("--dim-cap", type=int, help="dimension cap override")

    parser = argparse.ArgumentParser(
        prog="steinlab",
        description="Finite-n numerics for quantum hypothesis testing.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {config.VERSION}")
    sub = parser.add_subparsers(dest="experiment", required=True)

    p = sub.add_parser("exponent", parents=[common], help="error-exponent sweep for a state pair")
    p.add_argument("--rho", help="null hypothesis (matrix JSON file)")
    p.add_argument("--sigma", help="alternative hypothesis (matrix JSON file)")
    p.add_argument("--eps", type=float, dest="epsilon", help="first-error level")
    p.add_argument("--n-max", type=int)
    p.add_argument("--n-range", type=_int_list, help="explicit n values, e.g. 2,4,6")
    p.add_argument("--strategy", choices=["quantum_np", "designed_measurement", "naive_product_basis"])

    p = sub.add_parser("design", parents=[common], help="designed measurement and its diagnostics")
    p.add_argument("--rho")
    p.add_argument("--sigma")
    p.add_argument("--n", type=int)
    p.add_argument("--a", type=_float_list, dest="chernoff_a", help="Chernoff thresholds, e.g. 0.5,1.0")

    p = sub.add_parser("schur", parents=[common], help="irreducible decomposition of the n-fold tensor space")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--trials", type=int)

    p = sub.add_parser("ispec", parents=[common], help="information-spectrum diagnostics for classical pairs")
    p.add_argument("--pairs", help="JSON list of {n, p, q}")
    p.add_argument("--eps", type=float, dest="epsilon")

    p = sub.add_parser("ineq", parents=[common], help="operator-inequality stress checks")
    p.add_argument("--check", choices=["pinching-log", "plog2", "pinching-dominance", "negative-power"])
    p.add_argument("--trials", type=int)

    p = sub.add_parser(
        "gaussian", parents=[common], help="number-detection test for displaced thermal states",
        description="The null is accepted when |sqrt(k/n) - |theta0 - theta1|| <= eps. "
                    "The strict '>' form of this region sends the first error to 1, so the "
                    "complementary region is the one tested.",
    )
    p.add_argument("--theta0", type=_complex_pair, help="RE,IM")
    p.add_argument("--theta1", type=_complex_pair, help="RE,IM")
    p.add_argument("--nbar", type=float)
    p.add_argument("--n-max", type=int)
    p.add_argument("--n-range", type=_int_list)
    p.add_argument("--eps", type=float, dest="eps_region", help="acceptance half-width")
    p.add_argument("--cutoff", type=int)

    p = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    p.add_argument("--quick", action="store_true", default=None, help="reduced trial counts")
    return parser


def build_config(args: argparse.Namespace) -> Dict[str, Any]:
    """Config file fields overridden by every flag that was given."""
    raw: Dict[str, Any] = {}
    if args.config:
        loaded = load_json(args.config, "build_config")
        if not isinstance(loaded, dict):
            raise ConfigError("build_config", f"{args.config} must hold a JSON object")
        raw.update(loaded)
    raw["experiment"] = args.experiment
    for key, value in vars(args).items():
        if key in ("config", "experiment") or value is None:
            continue
        if key == "json_lines" and not value:
            continue
        raw[key] = value
    return raw


# ============================================================================
# OUTPUT
# ============================================================================

def _emit(result: RunResult, json_lines: bool) -> None:
    if result.columns:
        if json_lines:
            for row in result.rows:
                sys.stdout.write(dumps_line(row) + "\n")
        else:
            sys.stdout.write(format_csv(result.rows, result.columns))
        return
    document = {"experiment": result.experiment, "passed": result.passed, "result": result.result}
    if json_lines:
        sys.stdout.write(dumps_line(document) + "\n")
    else:
        sys.stdout.write(dumps(document) + "\n")


def _report(result: RunResult) -> None:
    status = "✅" if result.passed else "❌"
    print(f"{status} {result.experiment}: {'passed' if result.passed else 'FAILED'}", file=sys.stderr)
    for path in result.artifacts:
        print(f"💾 {path}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=settings.log_level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = parse_config(build_config(args))
        result = experiment_service.run(cfg)
    except SteinLabError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.exception("unexpected failure")
        print(f"❌ unexpected error: {exc}", file=sys.stderr)
        return 1

    _emit(result, cfg.json_lines)
    _report(result)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
