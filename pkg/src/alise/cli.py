"""``alise`` command line."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config, load_synth_config
from . import runs

log = logging.getLogger("alise")


def _emit(rows: dict):
    for k, v in rows.items():
        print(f"{k},{v}")


def cmd_synth(args):
    cfg, splits = load_synth_config(args.config)
    sizes = runs.run_synth(cfg, splits, args.out, args.seed)
    _emit({f"n_{k}": v for k, v in sizes.items()})


def cmd_pretrain(args):
    cfg = load_config(args.config)
    res = runs.run_pretrain(cfg, args.plot)
    _emit({"best_epoch": res.best_epoch, "best_val": f"{res.best_val:.6f}", "checkpoint": res.checkpoint})


def cmd_probe(args, frozen=True):
    cfg = load_config(args.config)
    res = runs.run_probe(cfg, frozen, args.plot)
    _emit({"macro_f1": f"{res['macro_f1']:.6f}"})


def cmd_finetune(args):
    cmd_probe(args, frozen=False)


def cmd_changedetect(args):
    res = runs.run_changedetect(load_config(args.config))
    _emit({"auc_alise": f"{res['auc_alise']:.6f}", "auc_gf": f"{res['auc_gf']:.6f}"})


def cmd_sweep(args):
    rows = runs.run_sweep(load_config(args.config))
    failed = sum(1 for r in rows if r["error"])
    _emit({"cells": len(rows), "failed": failed})


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "probe": cmd_probe,
    "finetune": cmd_finetune,
    "changedetect": cmd_changedetect,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alise", description="Irregular SITS encoder: data, pre-training, evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="UTF-8 key=value file")
        if name == "synth":
            p.add_argument("--out", required=True)
            p.add_argument("--seed", type=int, default=0)
        elif name in ("pretrain", "probe", "finetune"):
            p.add_argument("--plot", default=None, help="directory for curve images")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"alise {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
