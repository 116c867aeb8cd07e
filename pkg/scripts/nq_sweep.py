"""Probe macro F1 as a function of the number of learnable queries n_q."""

import numpy as np

from alise.train import evaluate_probe, pretrain, train_probe

from _common import base_parser, desk_config, seeds, splits, write_rows


def main():
    p = base_parser(__doc__)
    p.add_argument("--grid", default="1,4,10")
    args = p.parse_args()
    rows = []
    for seed in seeds(args):
        tr, va, te, _ = splits(args, seed)
        for n_q in (int(v) for v in args.grid.split(",")):
            cfg = desk_config(args, seed, n_q=n_q)
            enc = pretrain(cfg, [i.sits for i in tr], [i.sits for i in va]).model.encoder
            head = train_probe(cfg, enc, tr, va, frozen=True).head
            rows.append({"seed": seed, "n_q": n_q, "macro_f1": f"{evaluate_probe(enc, head, te, cfg)[1]:.4f}"})
    write_rows(args.out, rows)
    means = {}
    for r in rows:
        means.setdefault(r["n_q"], []).append(float(r["macro_f1"]))
    print("mean macro F1 by n_q:", {k: round(float(np.mean(v)), 4) for k, v in means.items()})


if __name__ == "__main__":
    main()
