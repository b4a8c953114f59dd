"""Command line front end.

    nvbath simulate CONFIG [--out DIR] [--threads K] [--seed S]
    nvbath verify CONFIG
    nvbath export-protons CONFIG [--out FILE]

Exit codes: 0 success, 2 configuration error, 3 resource cap,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import parse_config
from .errors import ConfigError, NumericalError, ResourceLimitError
from .runner import export_protons, run_scenario, verify


def _load_config(path: str, seed_override=None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text)
    if seed_override is not None:
        cfg.liquid.seed = int(seed_override)
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvbath",
        description="NV-center polarization dynamics for liquid, solid and "
        "mixed water baths",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario config")
    sim.add_argument("config")
    sim.add_argument("--out", default=None, help="output directory")
    sim.add_argument("--threads", type=int,
                     default=int(os.environ.get("NVBATH_THREADS", "1")))
    sim.add_argument("--seed", type=int, default=None,
                     help="override liquid.seed")

    ver = sub.add_parser("verify", help="validate a config and report "
                         "counts, margins and resource estimates")
    ver.add_argument("config")

    exp = sub.add_parser("export-protons",
                         help="write the scenario proton set as text")
    exp.add_argument("config")
    exp.add_argument("--out", default="protons.txt")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = _load_config(args.config, args.seed)
            out_dir = args.out if args.out is not None else cfg.output_dir
            manifest = run_scenario(cfg, out_dir, threads=args.threads)
            print(json.dumps(manifest["derived"], indent=2, sort_keys=True))
            print(f"wrote {', '.join(manifest['outputs'])} and manifest.json "
                  f"to {out_dir}")
        elif args.command == "verify":
            cfg = _load_config(args.config)
            print(json.dumps(verify(cfg), indent=2, sort_keys=True))
        elif args.command == "export-protons":
            cfg = _load_config(args.config)
            count = export_protons(cfg, args.out)
            print(f"wrote {count} protons to {args.out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
