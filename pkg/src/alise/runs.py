"""Disk-backed entry points behind the command line."""

from __future__ import annotations

import logging
import traceback
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import TrainConfig, _coerce
from .data import SynthConfig, compute_stats, synth_generate, write_dataset
from .train import (
    build_model,
    change_detection,
    evaluate_probe,
    load_pretrained,
    load_splits,
    pretrain,
    sweep_grid,
    train_probe,
)

log = logging.getLogger(__name__)


def write_array(path, arr: np.ndarray, **meta) -> Path:
    """Raw little-endian array plus a ``.txt`` key=value sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dtype = {np.dtype(np.float32): "<f4", np.dtype(np.float64): "<f4", np.dtype(np.uint8): "u1"}[arr.dtype]
    arr.astype(dtype).tofile(path)
    lines = {"dtype": "float32" if dtype == "<f4" else "uint8", "shape": ",".join(map(str, arr.shape)), **meta}
    path.with_suffix(".txt").write_text("".join(f"{k}={v}\n" for k, v in lines.items()), encoding="utf-8")
    return path


def write_metrics(path, rows: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("metric,value\n" + "".join(f"{k},{v}\n" for k, v in rows.items()), encoding="utf-8")
    return path


def run_synth(cfg: SynthConfig, splits: dict[str, int], out, seed: int) -> dict[str, int]:
    out = Path(out)
    sizes = {"train": splits.get("n_train", cfg.n_series), "val": splits.get("n_val", 0), "test": splits.get("n_test", 0)}
    total = sum(sizes.values())
    items = synth_generate(SynthConfig(**{**cfg.__dict__, "n_series": total}), seed)
    start = 0
    for name, n in sizes.items():
        if n:
            write_dataset(out / name, items[start:start + n])
        start += n
    compute_stats([it.sits for it in items[: sizes["train"]]]).save(out / "stats.txt")
    return sizes


def plot_curves(plot_dir, name: str, series: dict[str, list[float]], xlabel="epoch"):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plot_dir = Path(plot_dir)
    plot_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, ys in series.items():
        ax.plot(ys, label=label)
    ax.set_xlabel(xlabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(plot_dir / f"{name}.png", dpi=120)
    plt.close(fig)


def run_pretrain(cfg: TrainConfig, plot_dir=None):
    norm, _, stats = load_splits(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats.save(out / "stats.txt")
    result = pretrain(cfg, [it.sits for it in norm["train"]], [it.sits for it in norm.get("val", [])], out_dir=out)
    if plot_dir:
        plot_curves(plot_dir, "pretrain_loss", {
            "train": [h["train"] for h in result.history],
            "val": [h["val"] for h in result.history],
        })
    return result


def _encoder_for(cfg: TrainConfig):
    if cfg.checkpoint:
        model, saved = load_pretrained(cfg.checkpoint)
        for key in ("d_model", "n_q", "in_channels"):
            if getattr(saved, key) != getattr(cfg, key):
                raise ValueError(f"config {key}={getattr(cfg, key)} differs from checkpoint {getattr(saved, key)}")
        return model.encoder
    return build_model(cfg).encoder


def run_probe(cfg: TrainConfig, frozen: bool, plot_dir=None) -> dict:
    norm, _, _ = load_splits(cfg)
    encoder = _encoder_for(cfg)
    val = norm.get("val") or norm["train"]
    result = train_probe(cfg, encoder, norm["train"], val, frozen=frozen)
    test = norm.get("test") or val
    f1, macro, pred = evaluate_probe(result.encoder, result.head, test, cfg)
    out = Path(cfg.out_dir)
    tag = "probe" if frozen else "finetune"
    rows = {"macro_f1": f"{macro:.6f}", "best_epoch": result.best_epoch, "n_train": cfg.subset or len(norm["train"])}
    rows.update({f"f1_class_{k}": f"{v:.6f}" for k, v in enumerate(f1)})
    write_metrics(out / f"{tag}_metrics.csv", rows)
    write_array(out / f"{tag}_predictions.u8", pred.numpy().astype(np.uint8), content="class ids [series][h][w]")
    state = {f"head.{k}": v for k, v in result.head.state_dict().items()}
    if not frozen:
        state.update({f"encoder.{k}": v for k, v in result.encoder.state_dict().items()})
    ckpt.save_checkpoint(out / f"{tag}.ckpt", state, cfg.to_text())
    if plot_dir:
        plot_curves(plot_dir, f"{tag}_val_loss", {"val loss": [h["val_loss"] for h in result.history]})
    return {"macro_f1": macro, "f1": f1}


def run_changedetect(cfg: TrainConfig) -> dict:
    norm, raw, _ = load_splits(cfg)
    split = "test" if norm.get("test") else "val" if norm.get("val") else "train"
    encoder = _encoder_for(cfg)
    res = change_detection(encoder, norm[split], cfg, raw[split])
    out = Path(cfg.out_dir)
    write_array(out / "change_alise.f32", np.stack([m[0] for m in res["maps"]]).astype(np.float32),
                content="latent distance [series][h][w]")
    write_array(out / "change_gf.f32", np.stack([m[1] for m in res["maps"]]).astype(np.float32),
                content="gap-filled distance [series][h][w]")
    write_metrics(out / "changedetect_metrics.csv", {"auc_alise": f"{res['auc_alise']:.6f}", "auc_gf": f"{res['auc_gf']:.6f}"})
    return res


def run_sweep(cfg: TrainConfig) -> list[dict]:
    """Pre-train, probe and score change detection for every grid cell and seed."""
    norm, raw, _ = load_splits(cfg)
    val = norm.get("val") or norm["train"]
    test = norm.get("test") or val
    raw_test = raw.get("test") or raw.get("val") or raw["train"]
    cells = sweep_grid(cfg.grid)
    seeds = [int(s) for s in cfg.seeds.split(",") if s.strip()]
    keys = sorted({k for c in cells for k in c})
    rows = []
    for cell in cells:
        for seed in seeds:
            row = {**cell, "seed": seed}
            try:
                overrides = {k: _coerce(TrainConfig, k, v) for k, v in cell.items()}
                c = cfg.replace(seed=seed, **overrides)
                model = pretrain(c, [it.sits for it in norm["train"]], [it.sits for it in val]).model
                probe = train_probe(c, model.encoder, norm["train"], val, frozen=True)
                _, macro, _ = evaluate_probe(model.encoder, probe.head, test, c)
                cd = change_detection(model.encoder, test, c, raw_test)
                row.update(macro_f1=f"{macro:.6f}", auc=f"{cd['auc_alise']:.6f}", error="")
            except Exception as exc:  # one failing cell must not sink the sweep
                log.error("sweep cell %s seed %d failed:\n%s", cell, seed, traceback.format_exc())
                row.update(macro_f1="", auc="", error=type(exc).__name__)
            rows.append(row)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = keys + ["seed", "macro_f1", "auc", "error"]
    text = ",".join(header) + "\n" + "".join(",".join(str(r.get(h, "")) for h in header) + "\n" for r in rows)
    (out / "sweep.csv").write_text(text, encoding="utf-8")
    return rows
