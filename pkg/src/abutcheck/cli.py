"""Command line: abutcheck {profile,generate,check,run}.

Every option can also come from the environment as ABUTCHECK_<OPTION>
(e.g. ABUTCHECK_SEED=7, ABUTCHECK_MIN_LAYER=M2); flags win over the
environment.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

from . import __version__
from .abutment import MODES
from .design_io import DesignFormatError
from .library import LibraryError
from .pipeline import (InputError, RunConfig, load_inputs, run_check, run_generate, run_profile)
from .reporting import EXIT_ERROR, drc_summary

ENV_PREFIX = "ABUTCHECK_"


def _env(name: str, default, convert=str):
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None:
        return default
    try:
        return convert(raw)
    except ValueError:
        raise SystemExit(f"abutcheck: bad value for {ENV_PREFIX}{name.upper()}: {raw!r}")


def _optional_int(text: str) -> Optional[int]:
    return None if text.lower() in ("", "none") else int(text)


def _flag(text: str) -> bool:
    return text.lower() in ("1", "true", "yes", "on")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abutcheck",
        description="Enumerate standard-cell abutments, route random pin nets and report "
                    "boundary DRC problems per cell.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cells", default=_env("cells", None), help="cell library (LEF subset)")
    common.add_argument("--tech", default=_env("tech", None), help="technology rule deck")
    common.add_argument("--out-dir", default=_env("out_dir", "abutcheck_out"))
    common.add_argument("-v", "--verbose", action="count", default=0)

    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("--mode", choices=MODES, default=_env("mode", "all"))
    gen.add_argument("--die-margin", type=int, default=_env("die_margin", 0, int),
                     help="halo around the placed rows in database units")
    gen.add_argument("--top-name", default=_env("top_name", "TOP"))

    chk = argparse.ArgumentParser(add_help=False)
    chk.add_argument("--seed", type=int, default=_env("seed", 1, int))
    chk.add_argument("--min-layer", default=_env("min_layer", "M2"))
    chk.add_argument("--max-layer", default=_env("max_layer", "M3"))
    chk.add_argument("--dpt", choices=("precolored", "recolor", "off"), default=_env("dpt", "precolored"))
    chk.add_argument("--rule-inflation", type=float, default=_env("rule_inflation", 1.0, float))
    chk.add_argument("--boundary-margin", type=int, default=_env("boundary_margin", None, _optional_int),
                     help="half-width of the abutment band (default: 2 x pin-access spacing)")
    chk.add_argument("--pin-pairing", choices=("random", "aligned"), default=_env("pin_pairing", "random"))
    chk.add_argument("--net-degree", type=int, default=_env("net_degree", 2, int))
    chk.add_argument("--straps", choices=("random", "off"), default=_env("straps", "random"))
    chk.add_argument("--via-cost", type=int, default=_env("via_cost", 5, int))
    chk.add_argument("--max-ripup-iterations", type=int, default=_env("max_ripup_iterations", 20, int))
    chk.add_argument("--dp-radius", type=int, default=_env("dp_radius", None, _optional_int),
                     help="restrict odd-cycle search to this neighbourhood (off by default)")
    chk.add_argument("--jobs", type=int, default=_env("jobs", 1, int))
    chk.add_argument("--dump-routes", action="store_true", default=_env("dump_routes", False, _flag))

    sub.add_parser("profile", parents=[common], help="profile cell widths and heights")
    sub.add_parser("generate", parents=[common, gen], help="write testcell Verilog and DEF")
    sub.add_parser("check", parents=[common, gen, chk], help="generate, route and check testcells")
    sub.add_parser("run", parents=[common, gen, chk], help="profile, generate and check")
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    if not args.cells or not args.tech:
        raise InputError("both --cells and --tech are required")
    cfg = RunConfig(cells_path=args.cells, tech_path=args.tech, out_dir=args.out_dir)
    for name in ("mode", "die_margin", "top_name", "seed", "min_layer", "max_layer", "dpt",
                 "rule_inflation", "boundary_margin", "pin_pairing", "net_degree", "straps",
                 "via_cost", "max_ripup_iterations", "dp_radius", "jobs", "dump_routes"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    if cfg.rule_inflation < 1.0:
        raise InputError("--rule-inflation must be at least 1.0")
    if cfg.jobs < 1:
        raise InputError("--jobs must be at least 1")
    return cfg


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        inputs = load_inputs(cfg)
        if args.command in ("profile", "run"):
            run_profile(cfg, inputs)
        if args.command == "profile":
            print(f"profiled {len(inputs.cells)} cells into {cfg.out_dir}")
            return 0
        testcells = run_generate(cfg, inputs)
        if args.command == "generate":
            print(f"wrote {len(testcells)} testcells into {cfg.out_dir}")
            return 0
        summary = run_check(cfg, inputs, testcells)
    except (InputError, LibraryError, DesignFormatError, ValueError, KeyError, OSError) as exc:
        print(f"abutcheck: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(drc_summary(summary.verdicts))
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
