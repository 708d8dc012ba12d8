"""Command-line interface.

Subcommands: ``run <config.json>``, ``sweep <config.json>``,
``scenario <name>``; ``--list-scenarios`` prints the presets.  Exit codes:
0 success, 2 configuration error, 3 numerical failure (including sweeps
with failed grid points).  The default output directory can be set with
the SPINPULSE_OUTPUT_DIR environment variable.
"""

import argparse
import json
import sys

from .config import ConfigError, validate_config, validate_sweep_config
from .integrate import IntegrationError


def _add_common(p, seed=True):
    p.add_argument("--out", help="output directory (overrides config and env)")
    p.add_argument("--threads", type=int, help="worker threads for ensembles/sweeps")
    p.add_argument("--tol", type=float, help="override relative tolerance rtol")
    if seed:
        p.add_argument("--seed", type=int, help="override RNG master seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spinpulse",
        description="Collective-spin pulse simulator: mean-field, cumulant, "
        "master-equation and quantum-trajectory backends.",
    )
    ap.add_argument(
        "--list-scenarios", action="store_true", help="list scenario presets and exit"
    )
    sub = ap.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="execute one run config (JSON)")
    p_run.add_argument("config", help="path to the run config JSON")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="execute a parameter sweep config (JSON)")
    p_sweep.add_argument("config", help="path to the sweep config JSON")
    _add_common(p_sweep, seed=False)

    p_sc = sub.add_parser("scenario", help="run a built-in scenario preset")
    p_sc.add_argument("name", nargs="?", help="scenario name (see --list-scenarios)")
    p_sc.add_argument("--list", action="store_true", help="list scenario presets")
    _add_common(p_sc)
    return ap


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON: {exc}"]) from None


def _apply_overrides(raw, args, seed=True):
    if args.out:
        raw.setdefault("output", {})["directory"] = args.out
    if args.tol is not None:
        raw.setdefault("tolerances", {})["rtol"] = args.tol
    if seed and getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    return raw


def _print_scenarios():
    from .scenarios import SCENARIOS

    for name in sorted(SCENARIOS):
        print(f"{name:18s} {SCENARIOS[name][1]}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.list_scenarios or (args.command == "scenario" and getattr(args, "list", False)):
        _print_scenarios()
        return 0
    if args.command is None:
        build_parser().print_help()
        return 2

    try:
        if args.command == "run":
            from .runner import run

            raw = _apply_overrides(_load_json(args.config), args)
            cfg = validate_config(raw)
            summary = run(cfg, threads=args.threads)
            print(json.dumps(summary, indent=2, sort_keys=True))
            return 0

        if args.command == "sweep":
            from .runner import sweep

            raw = _load_json(args.config)
            if args.out:
                raw.setdefault("output", {})["directory"] = args.out
            if args.tol is not None:
                raw.setdefault("base", {}).setdefault("tolerances", {})["rtol"] = args.tol
            cfg = validate_sweep_config(raw)
            summary = sweep(cfg, threads=args.threads)
            print(json.dumps(summary, indent=2, sort_keys=True))
            return 3 if summary["failed_points"] else 0

        if args.command == "scenario":
            from .scenarios import run_scenario

            if not args.name:
                print("scenario name required (see --list-scenarios)", file=sys.stderr)
                return 2
            try:
                run_scenario(
                    args.name,
                    out_dir=args.out,
                    threads=args.threads,
                    seed=args.seed or 0,
                    rtol=args.tol,
                )
            except KeyError as exc:
                print(exc.args[0], file=sys.stderr)
                return 2
            return 0
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
