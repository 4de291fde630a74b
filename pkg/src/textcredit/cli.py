"""Command-line interface: one subcommand per pipeline stage.

Every subcommand reads a single YAML config (strictly validated, unknown
keys rejected) and writes its artifacts under the output directory.  Exit
status 0 on success; failures print one machine-parsable line
``error: <module>: <message>`` on stderr and exit 1.  Unknown subcommands
exit 2 with usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigInvalid, load_config

_STAGES = {
    "synth": pipeline.run_synth,
    "refine": pipeline.run_refine,
    "featurize": pipeline.run_featurize,
    "train": pipeline.run_train,
    "evaluate": pipeline.run_evaluate,
    "explain": pipeline.run_explain,
    "profit": pipeline.run_profit,
    "compare": pipeline.run_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textcredit",
        description="Text-enhanced credit default prediction pipeline",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, fn in _STAGES.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="pipeline config (YAML)")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        if name in ("train", "evaluate"):
            p.add_argument(
                "--variant",
                choices=["structured", "text", "combined"],
                default=None,
                help="restrict to one feature variant",
            )
        if name in ("train", "evaluate", "explain", "profit"):
            p.add_argument(
                "--text-source", default=None, help="restrict to one text source"
            )
        if name == "evaluate":
            p.add_argument(
                "--k", type=int, default=None, help="single top-k rejection count"
            )
    return parser


def _apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    if args.seed is not None:
        cfg["split"]["seed"] = args.seed
        cfg["bootstrap"]["master_seed"] = args.seed
    if getattr(args, "text_source", None):
        cfg["text_sources"] = [args.text_source]
        cfg["explain"]["text_source"] = args.text_source
    if getattr(args, "k", None):
        cfg["topk"]["ks"] = [args.k]
        cfg["topk"]["scale_to_corpus"] = False
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        out = Path(args.out) if args.out else Path(cfg["output_dir"])
        if args.subcommand == "train":
            result = pipeline.run_train(cfg, out, variant_filter=args.variant)
        elif args.subcommand == "evaluate":
            result = pipeline.run_evaluate(cfg, out, variant_filter=args.variant)
        else:
            result = _STAGES[args.subcommand](cfg, out)
    except ConfigInvalid as err:
        print(f"error: config: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f"error: io: {err}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as err:
        module = type(err).__module__
        origin = module.split(".")[-1] if module.startswith("textcredit") else "runtime"
        print(f"error: {origin}: {err}", file=sys.stderr)
        return 1
    print(json.dumps({"subcommand": args.subcommand, **result}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
