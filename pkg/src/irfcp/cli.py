"""Command-line entry point: ``irfcp <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PRESETS, load_config
from .errors import IrfcpError
from .exact import DENSE_MAX_DIM, build_tex
from .harness import cmd_lipschitz, emit, refit_csv, run_classic, run_multi
from .network import EDGE_CONVENTIONS

log = logging.getLogger("irfcp")


def _experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML experiment file")
    p.add_argument("--preset", choices=PRESETS, help="built-in network")
    p.add_argument("--seed", type=int, help="base seed; replication r uses seed + r")
    p.add_argument("--reps", type=int, help="number of replications")
    p.add_argument("--horizon", type=int, help="number of observation steps")
    p.add_argument("--alpha", type=float, help="false-alarm budget of the stopping rule")
    p.add_argument("--out", type=Path, help="output directory for CSV traces and summary.json")
    p.add_argument("--kappa-bar", type=float, dest="kappa_bar")
    p.add_argument("--eps", type=float, help="epsilon used by the envelope curves")
    p.add_argument("--max-lambda", type=int, dest="max_lambda",
                   help="condition on every change time being at most this")
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--workers", type=int, help="worker processes for replications")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irfcp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-classic", help="single-node Shiryayev experiment")
    _experiment_args(p)

    p = sub.add_parser("simulate-multi", help="exact vs approximate detection on a tree")
    _experiment_args(p)
    p.add_argument("--edge-convention", choices=EDGE_CONVENTIONS, dest="edge_convention")
    p.add_argument("--dump-kernel", type=Path, dest="dump_kernel",
                   help=f"also write the exact prediction kernel as CSV (d <= {DENSE_MAX_DIM})")

    p = sub.add_parser("lipschitz-check", help="closed-form vs empirical Lipschitz constants")
    p.add_argument("--rhos", type=float, nargs="+", help="per-node rho values")
    p.add_argument("--config", type=Path)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--pairs", type=int, default=10_000, help="sampled pairs per operator")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="write the report as JSON here")

    p = sub.add_parser("rate-fit", help="refit decay slopes on emitted trace CSVs")
    p.add_argument("csv", type=Path, nargs="+")
    p.add_argument("--burn-in", type=int, default=5, dest="burn_in")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("seed", "reps", "horizon", "alpha", "kappa_bar", "eps", "max_lambda",
            "burn_in", "workers", "edge_convention")
    out = {k: getattr(args, k, None) for k in keys}
    if args.out is not None:
        out["out"] = str(args.out)
    return out


def _simulate(args: argparse.Namespace, default_preset: str) -> int:
    preset = args.preset or (None if args.config else default_preset)
    config = load_config(args.config, preset=preset, **_overrides(args))
    if args.command == "simulate-classic":
        result = run_classic(config)
    else:
        result = run_multi(config)
        if args.dump_kernel is not None:
            build_tex(config.network.rhos).to_csv(args.dump_kernel)
    out = config.out or "out"
    paths = emit(result, out)
    print(json.dumps({k: result.summary[k] for k in result.summary if k != "config"},
                     indent=2, sort_keys=True, default=float))
    log.info("wrote %d files to %s", len(paths), out)
    return 0


def _lipschitz(args: argparse.Namespace) -> int:
    if args.rhos:
        rhos = args.rhos
    else:
        rhos = load_config(args.config, preset=args.preset or (None if args.config else "star4"),
                           ).network.rhos
    report = cmd_lipschitz(rhos, args.pairs, args.seed)
    print(report.render())
    if args.out is not None:
        args.out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0 if all(report.checks.values()) else 1


def _rate_fit(args: argparse.Namespace) -> int:
    for path in args.csv:
        print(json.dumps(refit_csv(path, args.burn_in), sort_keys=True))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "simulate-classic":
            return _simulate(args, "classic")
        if args.command == "simulate-multi":
            return _simulate(args, "star4")
        if args.command == "lipschitz-check":
            return _lipschitz(args)
        return _rate_fit(args)
    except (IrfcpError, OSError) as exc:
        print(f"irfcp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
