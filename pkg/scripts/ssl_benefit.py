"""Frozen linear probing: pre-trained encoder vs. randomly initialized encoder."""

import numpy as np

from alise.train import build_model, evaluate_probe, pretrain, train_probe

from _common import Timer, base_parser, desk_config, seeds, splits, write_rows


def main():
    args = base_parser(__doc__).parse_args()
    rows = []
    for seed in seeds(args):
        tr, va, te, _ = splits(args, seed)
        cfg = desk_config(args, seed)
        with Timer() as t:
            model = pretrain(cfg, [i.sits for i in tr], [i.sits for i in va]).model
        row = {"seed": seed, "pretrain_s": f"{t.seconds:.0f}"}
        for name, enc in (("pretrained", model.encoder), ("random", build_model(cfg).encoder)):
            head = train_probe(cfg, enc, tr, va, frozen=True).head
            row[f"f1_{name}"] = f"{evaluate_probe(enc, head, te, cfg)[1]:.4f}"
        rows.append(row)
    gap = np.mean([float(r["f1_pretrained"]) - float(r["f1_random"]) for r in rows])
    write_rows(args.out, rows)
    print(f"mean macro-F1 gain from pre-training: {gap:.4f}")


if __name__ == "__main__":
    main()
