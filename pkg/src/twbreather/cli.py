"""Command-line entry point: ``twbreather {run,meanfield,converge,oracle}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import KEYS, _convert, load_config, plan_from_values, plan_values, schema
from .errors import TWError

EXIT_CODES = {"config": 2, "shape": 2, "integration": 3, "numerical": 4, "ensemble": 5,
              "io": 6, "error": 1}


def _parser():
    p = argparse.ArgumentParser(prog="twbreather", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "truncated-Wigner ensemble"),
                        ("meanfield", "noise-free mean-field companion"),
                        ("converge", "step-doubling convergence report"),
                        ("oracle", "single-mode ordering-correction self-test")):
        sp = sub.add_parser(name, help=help_)
        if name == "oracle":
            continue
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--output-dir")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int,
                        default=int(os.environ.get("TWBREATHER_WORKERS", "1")))
        sp.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None)
        if name == "converge":
            sp.add_argument("--pairs", type=int, default=8)
            sp.add_argument("--levels", type=int, default=3)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _plan(args):
    from .ensemble import RunPlan

    values = plan_values(load_config(args.config)) if args.config else plan_values(RunPlan())
    values["N"] = values.get("N", 1000.0)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in KEYS:
            from .errors import ConfigError
            raise ConfigError(f"unknown key {key!r}")
        overrides[key] = _convert(key, raw)
    if "N" in overrides and "C" not in overrides and "C_as_multiple_of_invN" not in overrides:
        # keep the coupling a fixed multiple of 1/N when only N changes
        overrides["C_as_multiple_of_invN"] = values["C"] * values["N"]
    if "C_as_multiple_of_invN" in overrides:
        values.pop("C", None)
    values.update(overrides)
    if args.output_dir is not None:
        values["output_dir"] = args.output_dir
    if args.seed is not None:
        values["master_seed"] = args.seed
    if args.deterministic is not None:
        values["deterministic_reduction"] = args.deterministic
    return plan_from_values(values)


def _oracle():
    from .oracle import single_mode_check

    r = single_mode_check(2.0, 1.0)
    lines = [
        "single mode, dz = 1, coherent |alpha|^2 = 2",
        f"  Wigner moments  <|psi|^2>_W = {r['wigner_n']:.12g}   <|psi|^4>_W = {r['wigner_n2']:.12g}",
        f"  Fock symmetric  {{a+a}} = {r['symmetric_n']:.12g}   {{a+a+aa}} = {r['symmetric_n2']:.12g}",
        f"  corrected density = {r['density']:.12g}   (normal order {r['normal_n']:.12g})",
        f"  corrected G2      = {r['g2']:.12g}   (normal order {r['normal_n2']:.12g})",
    ]
    ok = (abs(r["density"] - 2) < 1e-9 and abs(r["g2"] - 4) < 1e-9
          and abs(r["wigner_n"] - r["symmetric_n"]) < 1e-9
          and abs(r["wigner_n2"] - r["symmetric_n2"]) < 1e-9)
    lines.append("PASS" if ok else "FAIL")
    print("\n".join(lines))
    return 0 if ok else 1


def _dispatch(args):
    from .ensemble import convergence_check, run_ensemble, run_meanfield
    from .io import manifest, write_manifest, write_series

    if args.command == "oracle":
        return _oracle()
    plan = _plan(args)
    out = plan.output_dir
    if args.command == "run":
        series = run_ensemble(plan, workers=args.workers)
        write_series(series, out, plan.outputs)
        write_manifest(manifest(plan, series, "run"), out)
    elif args.command == "meanfield":
        series = run_meanfield(plan)
        write_series(series, out, plan.outputs)
        write_manifest(manifest(plan, series, "meanfield"), out)
    elif args.command == "converge":
        report = convergence_check(plan, n_pairs=args.pairs, levels=args.levels)
        write_manifest(manifest(plan, None, "converge", {"convergence": report}), out)
        print(json.dumps(report, indent=2))
        return 0 if report["passed"] else 1
    print(f"wrote outputs to {out}")
    return 0


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 2:
            print(schema(), file=sys.stderr)
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except (TWError, argparse.ArgumentTypeError) as exc:
        category = getattr(exc, "category", "config")
        print(json.dumps({"error": category, "message": str(exc)}), file=sys.stderr)
        if category in ("config", "shape"):
            print(schema(), file=sys.stderr)
        return EXIT_CODES.get(category, 1)
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES["io"]
