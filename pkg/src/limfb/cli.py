"""Command-line entry point ``limfb``.

Exit codes: 0 success, 2 configuration or argument error, 3 numeric failure
(including any flagged CSV row unless ``--allow-partial``).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from typing import Callable

from . import analytic as an
from .analytic import Mode, SystemParams
from .errors import ConfigError, DomainError
from .harness import load_config, run, validate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _p(a, mode=Mode.MRT) -> SystemParams:
    return SystemParams(N=a.N, beta=a.beta, B=a.B, Tc=a.Tc, mode=mode)


# op name -> (required flags, evaluator)
ANALYTIC_OPS: dict[str, tuple[tuple[str, ...], Callable]] = {
    "delta_of": (("N", "B"), lambda a: an.delta_of(a.N, a.B)),
    "mrt_desired_laplace": (("N", "B", "gamma"), lambda a: an.mrt_desired_laplace(a.gamma, a.N, a.B)),
    "mrt_ici_laplace": (("beta", "gamma"), lambda a: an.mrt_ici_laplace(a.gamma, a.beta)),
    "mrt_laplace_I_over_cos2": (("N", "B", "beta", "gamma"),
                                lambda a: an.mrt_laplace_I_over_cos2(a.gamma, a.N, a.B, a.beta)),
    "mrt_sir_ccdf": (("N", "B", "beta", "gamma"),
                     lambda a: an.mrt_sir_ccdf(an.CcdfQuery((a.gamma,)), _p(a))[0]),
    "mrt_rate": (("N", "B", "beta"), lambda a: an.mrt_rate(_p(a))),
    "mrt_rate_lower": (("N", "B", "beta"), lambda a: an.mrt_rate_lower(_p(a))),
    "mrt_feedback_efficiency": (("N", "B", "beta"),
                                lambda a: an.mrt_feedback_efficiency(a.N, a.beta, a.B)),
    "mrt_b_lower": (("N", "beta", "Tc"), lambda a: an.mrt_b_lower(a.N, a.beta, a.Tc)),
    "mrt_b_lower_approx": (("N", "Tc"), lambda a: an.mrt_b_lower_approx(a.N, a.Tc)),
    "zf_iui_laplace": (("N", "B", "gamma"), lambda a: an.zf_iui_laplace(a.gamma, a.N, a.B)),
    "zf_ici_laplace": (("N", "beta", "gamma"), lambda a: an.zf_ici_laplace(a.gamma, a.N, a.beta)),
    "zf_ici_laplace_lower": (("N", "beta", "gamma"),
                             lambda a: an.zf_ici_laplace_lower(a.gamma, a.N, a.beta)),
    "zf_sir_ccdf": (("N", "B", "beta", "gamma"),
                    lambda a: an.zf_sir_ccdf(an.CcdfQuery((a.gamma,)), _p(a, Mode.ZF))[0]),
    "zf_rate": (("N", "B", "beta"), lambda a: an.zf_rate(_p(a, Mode.ZF))),
    "zf_rate_lower": (("N", "B", "beta"), lambda a: an.zf_rate_lower(_p(a, Mode.ZF))),
    "zf_feedback_efficiency": (("N", "B", "beta"),
                               lambda a: an.zf_feedback_efficiency(a.N, a.beta, a.B)),
    "zf_b_lower_tilde": (("N", "beta", "Tc"), lambda a: an.zf_b_lower_tilde(a.N, a.beta, a.Tc)),
    "zf_b_lower_coarse": (("N", "beta", "Tc"), lambda a: an.zf_b_lower_coarse(a.N, a.beta, a.Tc)),
    "mrt_net_rate": (("N", "B", "beta", "Tc"),
                     lambda a: an.net_rate(an.mrt_rate(_p(a)), a.B, a.Tc).net_rate),
    "zf_net_rate": (("N", "B", "beta", "Tc"),
                    lambda a: an.net_rate(an.zf_rate(_p(a, Mode.ZF)), a.B, a.Tc).net_rate),
    "mrt_optimize_b": (("N", "beta", "Tc"), lambda a: an.optimize_b(Mode.MRT, a.N, a.beta, a.Tc)[0]),
    "zf_optimize_b": (("N", "beta", "Tc"), lambda a: an.optimize_b(Mode.ZF, a.N, a.beta, a.Tc)[0]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="limfb", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", help="output directory (overrides output.dir)")
    p_run.add_argument("--allow-partial", action="store_true",
                       help="exit 0 even if some rows failed")

    p_val = sub.add_parser("validate", help="check a config and print resolved defaults")
    p_val.add_argument("--config", required=True)

    p_an = sub.add_parser("analytic", help="evaluate one closed-form quantity")
    p_an.add_argument("op", metavar="op-name", help=", ".join(sorted(ANALYTIC_OPS)))
    p_an.add_argument("--N", type=int)
    p_an.add_argument("--beta", type=float)
    p_an.add_argument("--B", type=int)
    p_an.add_argument("--Tc", type=int)
    p_an.add_argument("--gamma", type=float, help="SIR threshold or transform argument")
    return parser


def _analytic(args) -> int:
    if args.op not in ANALYTIC_OPS:
        print(f"error: unknown op {args.op!r}; choose from {', '.join(sorted(ANALYTIC_OPS))}",
              file=sys.stderr)
        return EXIT_CONFIG
    required, fn = ANALYTIC_OPS[args.op]
    missing = [f"--{name}" for name in required if getattr(args, name) is None]
    if missing:
        print(f"error: {args.op} needs {' '.join(missing)}", file=sys.stderr)
        return EXIT_CONFIG
    if args.B is None:
        args.B = 0
    if args.Tc is None:
        args.Tc = 1000
    if args.beta is None:
        args.beta = 4.0
    try:
        value = fn(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if isinstance(value, float) and not math.isfinite(value):
        print(f"numeric failure: {args.op} returned {value}", file=sys.stderr)
        return EXIT_NUMERIC
    print(repr(value) if isinstance(value, float) else value)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "analytic":
            return _analytic(args)
        cfg = load_config(args.config)
        if args.command == "validate":
            print(json.dumps(validate(cfg), indent=2))
            return EXIT_OK
        cfg = cfg.with_seed(args.seed).with_out_dir(args.out)
        outcome = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {outcome.csv_path} and {outcome.json_path} (seed {outcome.metadata['seed']})")
    if outcome.failed_rows and not args.allow_partial:
        print(f"{outcome.failed_rows} row(s) failed; rerun with --allow-partial to accept",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
