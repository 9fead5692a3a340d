"""Command-line front end for the benchmark and dataset drivers.

Every command prints a ``[PASS]/[FAIL]`` line per validation check and exits
0 only when all of them pass. Parameters come from three layers, later ones
winning: the command's built-in defaults (``--paper-scale`` swaps in the
full published protocol), an optional ``--config`` file holding a single
``[params]`` section, and repeated ``--set key=value`` overrides. Keys are
the parameter-struct field names; unknown keys are errors that list the
valid ones. All quantities are SI (m, s, A/m, J/m^2) — no unit suffixes.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .bench.common import CheckList
from .bench.dataset import DatasetParams, run_gen_dataset
from .bench.infer_check import run_infer_check
from .bench.integrators import IntegratorBenchParams, run_bench
from .bench.plots import render_csv
from .bench.skyrmion import SEED_NAMES, SkyrmionParams, run_skyrmion, run_sweep
from .bench.std2 import Std2Params, run_std2
from .bench.std3 import Std3Params, run_crossover
from .bench.std4 import RESOLUTIONS, Std4Params, run_resolution_comparison, run_std4
from .scenario import ConfigError, _parse_sections

PAPER_STD2_SIZES = tuple(float(v) for v in range(3, 25, 3))


# --- parameter layering -----------------------------------------------------

def _parse_cli_value(text: str):
    """Value syntax for --set / config files: numbers, true/false, bracketed
    tuples, anything else verbatim (paths, method names)."""
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        try:
            return tuple(float(p) for p in text[1:-1].split(","))
        except ValueError as exc:
            raise ConfigError(f"bad tuple {text!r}: {exc}") from None
    if text == "true":
        return True
    if text == "false":
        return False
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    return text


def _coerce(key: str, value, default, where: str):
    """Fit a parsed value to the type of the field's default."""
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, tuple):
        if isinstance(value, tuple) and len(value) == len(default):
            return value
        if isinstance(value, tuple):
            raise ConfigError(f"{where}: {key} takes {len(default)} components,"
                              f" got {len(value)}")
    elif isinstance(default, str):
        if isinstance(value, str):
            return str(value)
    else:
        raise ConfigError(f"{where}: {key} cannot be set from the command line")
    raise ConfigError(f"{where}: {key} expects a value like {default!r}, "
                      f"got {value!r}")


def load_params(cls, args, base: dict | None = None):
    """Build a parameter struct from defaults, --config, then --set items."""
    fields = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            fields[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:  # pragma: no cover
            fields[f.name] = f.default_factory()
    values = dict(base or {})

    def assign(key, value, where):
        if key not in fields:
            raise ConfigError(f"{where}: unknown key {key!r} for this command;"
                              f" valid keys: {', '.join(sorted(fields))}")
        values[key] = _coerce(key, value, fields[key], where)

    if args.config:
        path = Path(args.config)
        sections = _parse_sections(path.read_text(encoding="utf-8"), str(path))
        for name, kv in sections.items():
            if name != "params":
                raise ConfigError(f"{path}: unknown section [{name}]; command "
                                  "configs hold a single [params] section")
            for k, v in kv.items():
                assign(k, v, f"{path}: params.{k}")
    for item in args.set:
        key, sep, text = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set {item!r}: expected key=value")
        assign(key.strip(), _parse_cli_value(text), f"--set {key.strip()}")
    return cls(**values)


def _no_params(args, command: str):
    if args.config or args.set:
        raise ConfigError(f"{command} takes no --config/--set overrides")


def _out_dir(args) -> Path:
    return Path(args.out_dir) if args.out_dir \
        else Path("magnex_out") / args.command


# --- commands ---------------------------------------------------------------

def cmd_std2(args) -> CheckList:
    base = {"increments": 1000} if args.paper_scale else None
    p = load_params(Std2Params, args, base)
    sizes = tuple(args.sizes) if args.sizes else \
        (PAPER_STD2_SIZES if args.paper_scale else (3.0,))
    _, checks = run_std2(sizes, p, workers=args.threads, out_dir=_out_dir(args))
    return checks


def cmd_std3(args) -> CheckList:
    p = load_params(Std3Params, args)
    ns = tuple(args.ns) if args.ns else \
        ((10, 20, 40) if args.paper_scale else (10,))
    _, checks = run_crossover(ns, p, workers=args.threads,
                              out_dir=_out_dir(args))
    return checks


def cmd_std4(args) -> CheckList:
    p = load_params(Std4Params, args)
    if args.paper_scale:
        _, checks = run_resolution_comparison(args.field, p,
                                              workers=args.threads,
                                              out_dir=_out_dir(args))
    else:
        _, checks = run_std4(args.field, args.resolution, p,
                             workers=args.threads, out_dir=_out_dir(args))
    return checks


def cmd_skyrmion(args) -> CheckList:
    p = load_params(SkyrmionParams, args)
    if args.sweep:
        _, checks = run_sweep(p, R=args.radius, out_dir=_out_dir(args))
    else:
        _, checks = run_skyrmion(args.seed_state, p, D=args.dmi,
                                 R=args.radius, out_dir=_out_dir(args))
    return checks


def cmd_bench_integrators(args) -> CheckList:
    base = {"nx": 640, "ny": 160, "nz": 4} if args.paper_scale else None
    p = load_params(IntegratorBenchParams, args, base)
    _, checks = run_bench(p, workers=args.threads, duration=args.duration,
                          out_dir=_out_dir(args))
    return checks


def cmd_gen_dataset(args) -> CheckList:
    base = {"runs": 1000, "steps": 400_000, "snap_every": 20_000} \
        if args.paper_scale else None
    if args.runs is not None:
        base = dict(base or {}, runs=args.runs)
    if args.scenario is not None:
        base = dict(base or {}, scenario=args.scenario)
    p = load_params(DatasetParams, args, base)
    _, checks = run_gen_dataset(_out_dir(args), args.seed, p,
                                workers=args.threads)
    return checks


def cmd_infer_check(args) -> CheckList:
    _no_params(args, "infer-check")
    return run_infer_check(args.model, pairs_dir=args.pairs, e2e=args.e2e,
                           topology=args.topology, out_dir=_out_dir(args),
                           workers=args.threads)


def cmd_plot(args) -> CheckList:
    _no_params(args, "plot")
    out = render_csv(args.csv, args.output)
    print(f"wrote {out}")
    checks = CheckList()
    checks.add("plot rendered", True, str(out))
    return checks


# --- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="parameter file with a [params] section")
    common.add_argument("--set", metavar="KEY=VALUE", action="append",
                        default=[], help="override one parameter field "
                        "(repeatable; wins over --config)")
    common.add_argument("--out-dir", metavar="DIR",
                        help="output directory (default magnex_out/<command>)")
    common.add_argument("--seed", type=int, default=1,
                        help="RNG seed for randomized protocols (default 1)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for the convolution backend")
    common.add_argument("--paper-scale", action="store_true",
                        help="run the full published protocol instead of the "
                        "reduced desk-scale default")

    parser = argparse.ArgumentParser(
        prog="magnex",
        description="Micromagnetic benchmark suites and surrogate tooling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("std2", parents=[common],
                       help="hysteresis of the 5:1:0.1 prism across sizes")
    p.add_argument("--sizes", type=float, nargs="+", metavar="D_OVER_LEX",
                   help="particle sizes d/lex (default 3; paper scale 3..24)")
    p.set_defaults(func=cmd_std2)

    p = sub.add_parser("std3", parents=[common],
                       help="cube flower/vortex energy crossover")
    p.add_argument("--ns", type=int, nargs="+", metavar="N",
                   help="grid sizes per edge (default 10; paper scale "
                   "10 20 40 plus extrapolation)")
    p.set_defaults(func=cmd_std3)

    p = sub.add_parser("std4", parents=[common],
                       help="thin-film switching dynamics")
    p.add_argument("--field", type=int, choices=(1, 2), default=1)
    p.add_argument("--resolution", choices=tuple(RESOLUTIONS), default="coarse")
    p.set_defaults(func=cmd_std4)

    p = sub.add_parser("skyrmion", parents=[common],
                       help="chiral textures in an anisotropic nanodot")
    p.add_argument("--seed-state", choices=tuple(SEED_NAMES.values()),
                   default="skyrmion", help="initial texture class")
    p.add_argument("--dmi", type=float, metavar="J_PER_M2",
                   help="interfacial coupling strength (default 4.5e-3)")
    p.add_argument("--radius", type=float, metavar="METERS",
                   help="dot radius (default 50e-9)")
    p.add_argument("--sweep", action="store_true",
                   help="run the 4-point D/Dc radius sweep instead of a "
                   "single relaxation")
    p.set_defaults(func=cmd_skyrmion)

    p = sub.add_parser("bench-integrators", parents=[common],
                       help="empirical stable-step and cost comparison")
    p.add_argument("--duration", type=float, metavar="SECONDS",
                   help="measurement interval (default 1.25e-13)")
    p.set_defaults(func=cmd_bench_integrators)

    p = sub.add_parser("gen-dataset", parents=[common],
                       help="surrogate training snapshots under random fields")
    p.add_argument("--runs", type=int, help="number of field draws")
    p.add_argument("--scenario", choices=("film", "nanodot"),
                   help="base state and physics (default film)")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("infer-check", parents=[common],
                       help="verify a trained surrogate against the exact "
                       "convolution backend")
    p.add_argument("--model", required=True, metavar="MAGW",
                   help="weight file to verify")
    p.add_argument("--pairs", metavar="DIR",
                   help="directory of stored (m, h) snapshot pairs to score")
    p.add_argument("--e2e", action="store_true",
                   help="repeat the film switching run with both backends")
    p.add_argument("--topology", action="store_true",
                   help="compare nanodot ring counts between backends")
    p.set_defaults(func=cmd_infer_check)

    p = sub.add_parser("plot", parents=[common],
                       help="render a benchmark CSV to PNG")
    p.add_argument("csv", help="input table")
    p.add_argument("--output", metavar="PNG",
                   help="output path (default: alongside the CSV)")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        checks = args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:  # blowups, failed sweeps, disk-space guard
        print(f"error: {exc}", file=sys.stderr)
        return 1
    checks.report(print)
    n = len(checks.checks)
    ok = sum(1 for _, passed, _ in checks.checks if passed)
    print(f"{'PASS' if checks.all_ok else 'FAIL'} ({ok}/{n} checks)")
    return 0 if checks.all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
