"""Command-line entry point: ``ropdf {marginal,joint,complexity,mutualinfo,validate}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .case_model import CaseParseError
from .closure import ClosureFitError
from .fv import SolverError, ZeroVarianceError
from .pipeline import (ConfigError, StageError, default_config, emit_mutualinfo, emit_plotdata,
                       load_config, quick, run_complexity, run_joint, run_marginal, validate)
from .stochastic_sim import SimulationDivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_NUMERIC = (SolverError, ZeroVarianceError, ClosureFitError, SimulationDivergenceError,
            FloatingPointError, ArithmeticError)


def _parser():
    p = argparse.ArgumentParser(prog="ropdf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [("marginal", "1D densities of each recorded line"),
                       ("joint", "2D density of two recorded lines"),
                       ("complexity", "sample-complexity curves without a line trip"),
                       ("mutualinfo", "mutual-information curve from a joint run"),
                       ("validate", "check a config file and its case bundle")]:
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="INI experiment file (default: builtin case9 settings)")
        s.add_argument("--seed", type=int, help="override the base seed")
        s.add_argument("--quick", action="store_true", help="small ensembles for smoke tests")
        s.add_argument("--out", help="output directory (overrides [output] dir)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args):
    cfg = load_config(args.config) if args.config else default_config("case9")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out=args.out)
    if args.quick:
        cfg = quick(cfg)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "validate":
            case, _ = validate(cfg)
            print(f"ok: {case.name or cfg.case} n={case.n} lines={len(case.edges)}")
            return EXIT_OK
        if args.command == "marginal":
            res = run_marginal(cfg)
            files = emit_plotdata(res)
        elif args.command == "joint":
            res = run_joint(cfg)
            files = emit_plotdata(res)
        elif args.command == "mutualinfo":
            res = run_joint(cfg)
            files = emit_mutualinfo(res)
        else:
            res = run_complexity(cfg)
            files = emit_plotdata(res)
        if args.command != "mutualinfo":
            print(json.dumps(res.summary(), indent=2, sort_keys=True))
        for f in files:
            print(f"wrote {f}", file=sys.stderr)
        return EXIT_OK
    except (ConfigError, CaseParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        if isinstance(exc.cause, (ConfigError, CaseParseError, KeyError)):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _NUMERIC as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
