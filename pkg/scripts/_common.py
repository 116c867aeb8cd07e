"""Shared setup for the experiment scripts: synthetic splits and the desk-scale model."""

import argparse
import csv
import sys
import time
from pathlib import Path

from alise.config import TrainConfig
from alise.data import SynthConfig, compute_stats, normalize_labeled, synth_generate


def base_parser(doc):
    p = argparse.ArgumentParser(description=doc)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-val", type=int, default=40)
    p.add_argument("--n-test", type=int, default=40)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--probe-epochs", type=int, default=100)
    p.add_argument("--d-model", type=int, default=16)
    p.add_argument("--n-q", type=int, default=4)
    p.add_argument("--out", default="results.csv")
    return p


def seeds(args):
    return [int(s) for s in args.seeds.split(",")]


def desk_config(args, seed, **kw) -> TrainConfig:
    return TrainConfig(
        size=args.size, d_model=args.d_model, n_q=args.n_q, d_emb=2 * args.d_model, d_hidden=2 * args.d_model,
        n_head=2, epochs=args.epochs, probe_epochs=args.probe_epochs, seed=seed,
    ).replace(**kw)


def splits(args, seed):
    """``(train, val, test, raw_test)`` of one synthetic draw, normalized with train statistics."""
    n = args.n_train + args.n_val + args.n_test
    raw = synth_generate(SynthConfig(n_series=n, size=args.size), seed)
    norm = normalize_labeled(raw, compute_stats([it.sits for it in raw[: args.n_train]]))
    a, b = args.n_train, args.n_train + args.n_val
    return norm[:a], norm[a:b], norm[b:], raw[b:]


def write_rows(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    csv.DictWriter(sys.stdout, fieldnames=list(rows[0])).writerows(rows)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start
