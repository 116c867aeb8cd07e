"""Small labeled subsets: frozen probe (LP), fine-tuning (FT) and supervised from scratch (FS)."""

import copy

from alise.train import build_model, evaluate_probe, pretrain, train_probe

from _common import base_parser, desk_config, seeds, splits, write_rows


def main():
    p = base_parser(__doc__)
    p.add_argument("--subset", type=int, default=30)
    p.add_argument("--finetune-epochs", type=int, default=200)
    p.set_defaults(probe_epochs=400)  # an epoch of 30 series is only 15 steps
    args = p.parse_args()
    rows = []
    for seed in seeds(args):
        tr, va, te, _ = splits(args, seed)
        cfg = desk_config(args, seed, subset=args.subset, finetune_epochs=args.finetune_epochs)
        pre = pretrain(cfg, [i.sits for i in tr], [i.sits for i in va]).model
        row = {"seed": seed, "subset": args.subset}
        lp = train_probe(cfg, pre.encoder, tr, va, frozen=True)
        row["f1_lp"] = f"{evaluate_probe(lp.encoder, lp.head, te, cfg)[1]:.4f}"
        ft = train_probe(cfg, copy.deepcopy(pre.encoder), tr, va, frozen=False)
        row["f1_ft"] = f"{evaluate_probe(ft.encoder, ft.head, te, cfg)[1]:.4f}"
        fs = train_probe(cfg, build_model(cfg).encoder, tr, va, frozen=False)
        row["f1_fs"] = f"{evaluate_probe(fs.encoder, fs.head, te, cfg)[1]:.4f}"
        rows.append(row)
    write_rows(args.out, rows)


if __name__ == "__main__":
    main()
