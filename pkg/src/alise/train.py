"""Pre-training and downstream training loops."""

from __future__ import annotations

import copy
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from . import checkpoint as ckpt
from .config import TrainConfig
from .data import (
    LabeledSits,
    NormStats,
    Sits,
    compute_stats,
    delta_t,
    normalize_labeled,
    read_dataset,
    select_consecutive,
)
from .decoder import Decoder, cross_recon_loss
from .downstream import ProbeHead, auc_roc, change_map, f1_scores, gf_change_map, probe_loss
from .encoder import Alise, series_tensors
from .objective import Projector, covariance_loss, invariance_loss, total_loss
from .schedulers import PlateauScheduler, cosine_warm_restarts
from .views import make_views

log = logging.getLogger(__name__)


class AliseSSL(nn.Module):
    """Every learnable tensor of the pre-training task."""

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        self.encoder = Alise(cfg.encoder_config())
        self.decoder = Decoder(cfg.d_model, cfg.in_channels)
        self.projector = Projector(cfg.d_model, cfg.d_emb)


def seed_everything(seed: int):
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


def build_model(cfg: TrainConfig) -> AliseSSL:
    seed_everything(cfg.seed)
    return AliseSSL(cfg)


def crop(item, size: int, rng: np.random.Generator | None):
    """Random crop when ``rng`` is given, center crop otherwise."""
    h, w = (item.sits if isinstance(item, LabeledSits) else item).shape
    if h == size and w == size:
        return item
    if h < size or w < size:
        raise ValueError(f"series of {h}x{w} is smaller than the crop size {size}")
    if rng is None:
        top, left = (h - size) // 2, (w - size) // 2
    else:
        top, left = int(rng.integers(0, h - size + 1)), int(rng.integers(0, w - size + 1))
    return item.crop(top, left, size)


def _stack(series: Sequence[Sits]):
    x = torch.from_numpy(np.stack([s.values for s in series]))
    delta = torch.from_numpy(np.stack([delta_t(s.dates) for s in series]))
    valid = torch.from_numpy(np.stack([s.validity for s in series]))
    return x, delta, valid


def view_batch(series: Sequence[Sits], cfg: TrainConfig, rng: np.random.Generator | None, seeds=None):
    """Select ``n_dates`` consecutive acquisitions per series and split into views."""
    a, b = [], []
    for i, s in enumerate(series):
        s = crop(s, cfg.size, rng)
        sub = select_consecutive(s, cfg.n_dates, rng if seeds is None else seeds[i])
        pair = make_views(sub, cfg.t_w)
        a.append(pair.view_a)
        b.append(pair.view_b)
    return _stack(a), _stack(b)


def ssl_losses(model: AliseSSL, view_a, view_b, cfg: TrainConfig) -> dict[str, torch.Tensor]:
    ya = model.encoder(view_a[0], view_a[1])
    yb = model.encoder(view_b[0], view_b[1])
    w = cfg.loss_weights()
    l_rec = cross_recon_loss(view_a, view_b, ya, yb, model.decoder)
    if w.w_inv or w.w_cov:
        za, zb = model.projector(ya), model.projector(yb)
        l_inv = invariance_loss(za, zb)
        l_cov = covariance_loss(za, zb)
    else:
        l_inv = l_cov = torch.zeros((), dtype=l_rec.dtype)
    return {"l_rec": l_rec, "l_inv": l_inv, "l_cov": l_cov, "total": total_loss(l_inv, l_cov, l_rec, w)}


@dataclass
class PretrainResult:
    model: AliseSSL
    best_epoch: int
    best_val: float
    history: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None


def _val_loss(model, val, cfg):
    model.eval()
    total, n = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(val), cfg.batch_size):
            chunk = val[i:i + cfg.batch_size]
            seeds = [cfg.seed * 100003 + i + j for j in range(len(chunk))]
            a, b = view_batch(chunk, cfg, None, seeds)
            total += float(ssl_losses(model, a, b, cfg)["total"]) * len(chunk)
            n += len(chunk)
    model.train()
    return total / max(n, 1)


def pretrain(cfg: TrainConfig, train: Sequence[Sits], val: Sequence[Sits], out_dir=None) -> PretrainResult:
    """Multi-view pre-training; keeps the parameters with the lowest validation loss.

    ``train``/``val`` are normalized series. When ``out_dir`` is given the
    selected checkpoint and a ``metrics.csv`` of per-step losses are written there.
    """
    model = build_model(cfg)
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr_max, betas=(0.9, 0.999), eps=1e-8)
    train = list(train)[: cfg.max_series or None]
    steps_per_epoch = math.ceil(len(train) / cfg.batch_size)
    metrics_lines = ["step,l_rec,l_inv,l_cov,total"]
    history = []
    best = (math.inf, -1, None)
    step = 0
    model.train()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train))
        running = []
        for k in range(steps_per_epoch):
            idx = order[k * cfg.batch_size:(k + 1) * cfg.batch_size]
            a, b = view_batch([train[i] for i in idx], cfg, rng)
            lr = cosine_warm_restarts(epoch + k / steps_per_epoch, cfg.t0, cfg.lr_max, t_mult=cfg.t_mult)
            for g in opt.param_groups:
                g["lr"] = lr
            losses = ssl_losses(model, a, b, cfg)
            if not torch.isfinite(losses["total"]):
                raise FloatingPointError(f"non-finite loss at step {step} (epoch {epoch})")
            opt.zero_grad()
            losses["total"].backward()
            opt.step()
            vals = {k_: v.item() for k_, v in losses.items()}
            running.append(vals["total"])
            metrics_lines.append(
                f"{step},{vals['l_rec']:.8g},{vals['l_inv']:.8g},{vals['l_cov']:.8g},{vals['total']:.8g}"
            )
            step += 1
        val_loss = _val_loss(model, list(val), cfg) if len(val) else float(np.mean(running))
        history.append({"epoch": epoch, "train": float(np.mean(running)), "val": val_loss})
        log.info("epoch %d train %.5f val %.5f", epoch, history[-1]["train"], val_loss)
        if val_loss < best[0]:
            best = (val_loss, epoch, copy.deepcopy(model.state_dict()))
    model.load_state_dict(best[2])
    result = PretrainResult(model, best[1], best[0], history)
    if out_dir is not None:
        out_dir = Path(out_dir)
        result.checkpoint = ckpt.save_checkpoint(out_dir / "pretrain.ckpt", model.state_dict(), cfg.to_text())
        (out_dir / "metrics.csv").write_text("\n".join(metrics_lines) + "\n", encoding="utf-8")
        (out_dir / "history.csv").write_text(
            "epoch,train,val\n" + "".join(f"{h['epoch']},{h['train']:.8g},{h['val']:.8g}\n" for h in history),
            encoding="utf-8",
        )
    return result


def load_pretrained(path) -> tuple[AliseSSL, TrainConfig]:
    """Rebuild the model from a checkpoint and its config snapshot."""
    from .config import from_kv, parse_kv

    state, text = ckpt.read_checkpoint(path)
    saved = from_kv(TrainConfig, parse_kv(text))
    model = AliseSSL(saved)
    ckpt.load_into(model, state)
    return model, saved


# -- downstream -------------------------------------------------------------

def labeled_views(items: Sequence[LabeledSits], cfg: TrainConfig):
    """``(series, labels)`` of year ``probe_year``, center-cropped."""
    out = []
    for it in items:
        it = crop(it, cfg.size, None)
        out.append((it.year(cfg.probe_year), torch.from_numpy(it.labels[cfg.probe_year].astype(np.int64))))
    return out


@torch.no_grad()
def features(encoder: Alise, series: Sequence[Sits]) -> torch.Tensor:
    encoder.eval()
    return torch.cat([encoder(*series_tensors(s)) for s in series])


@dataclass
class ProbeResult:
    head: ProbeHead
    encoder: Alise
    best_epoch: int
    history: list[dict] = field(default_factory=list)


def _predict(encoder, head, data, feats=None):
    preds = []
    with torch.no_grad():
        for i, (s, _) in enumerate(data):
            y = feats[i:i + 1] if feats is not None else encoder(*series_tensors(s))
            preds.append(head(y).argmax(1)[0])
    return torch.stack(preds)


def evaluate_probe(encoder, head, items, cfg: TrainConfig):
    data = labeled_views(items, cfg)
    encoder.eval()
    pred = _predict(encoder, head, data)
    truth = torch.stack([lab for _, lab in data])
    f1, macro = f1_scores(pred.numpy(), truth.numpy(), cfg.n_classes)
    return f1, macro, pred


def train_probe(cfg: TrainConfig, encoder: Alise, train_items, val_items, frozen: bool = True) -> ProbeResult:
    """Train a linear head on top of ``encoder``.

    ``frozen`` keeps the encoder fixed (features computed once); otherwise the
    encoder is updated jointly with the head.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    train_items = list(train_items)
    if cfg.subset:
        if cfg.subset > len(train_items):
            raise ValueError(f"subset of {cfg.subset} requested from {len(train_items)} series")
        train_items = [train_items[i] for i in sorted(rng.choice(len(train_items), cfg.subset, replace=False))]
    tr, va = labeled_views(train_items, cfg), labeled_views(val_items, cfg)
    head = ProbeHead(cfg.n_q, cfg.d_model, cfg.n_classes)
    if frozen:
        for p in encoder.parameters():
            p.requires_grad_(False)
        params = list(head.parameters())
        f_tr, f_va = features(encoder, [s for s, _ in tr]), features(encoder, [s for s, _ in va])
        epochs = cfg.probe_epochs
    else:
        for p in encoder.parameters():
            p.requires_grad_(True)
        params = list(encoder.parameters()) + list(head.parameters())
        f_tr = f_va = None
        epochs = cfg.finetune_epochs
    opt = torch.optim.Adam(params, lr=cfg.probe_lr, betas=(0.9, 0.999), eps=1e-8)
    sched = PlateauScheduler(cfg.probe_lr, cfg.patience, cfg.decay, mode="min")
    labels_tr = torch.stack([lab for _, lab in tr])
    labels_va = torch.stack([lab for _, lab in va])
    best = (math.inf, -1, None, None)
    history = []
    for epoch in range(epochs):
        if not frozen:
            encoder.train()
        order = rng.permutation(len(tr))
        for k in range(0, len(tr), cfg.probe_batch):
            idx = order[k:k + cfg.probe_batch]
            if frozen:
                y = f_tr[idx]
            else:
                y = torch.cat([encoder(*series_tensors(tr[i][0])) for i in idx])
            loss = probe_loss(head(y), labels_tr[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        with torch.no_grad():
            if frozen:
                val_loss = float(probe_loss(head(f_va), labels_va))
            else:
                encoder.eval()
                val_loss = float(np.mean([
                    float(probe_loss(head(encoder(*series_tensors(s))), lab[None])) for s, lab in va
                ]))
        history.append({"epoch": epoch, "val_loss": val_loss, "lr": opt.param_groups[0]["lr"]})
        if val_loss < best[0]:
            enc_state = None if frozen else copy.deepcopy(encoder.state_dict())
            best = (val_loss, epoch, copy.deepcopy(head.state_dict()), enc_state)
        lr = sched.step(val_loss)
        for g in opt.param_groups:
            g["lr"] = lr
    head.load_state_dict(best[2])
    if best[3] is not None:
        encoder.load_state_dict(best[3])
    encoder.eval()
    return ProbeResult(head, encoder, best[1], history)


def change_detection(encoder: Alise, items: Sequence[LabeledSits], cfg: TrainConfig, raw_items=None):
    """AUC of the latent distance map and of the gap-filling baseline.

    ``raw_items`` (unnormalized series) feed the gap-filling baseline when
    given; both maps are scored on pixels that are not background in either year.
    """
    raw_items = items if raw_items is None else raw_items
    alise_scores, gf_scores, truth, maps = [], [], [], []
    encoder.eval()
    with torch.no_grad():
        for it, raw in zip(items, raw_items):
            it, raw = crop(it, cfg.size, None), crop(raw, cfg.size, None)
            y1 = encoder(*series_tensors(it.year(0)))
            y2 = encoder(*series_tensors(it.year(1)))
            d = change_map(y1, y2)[0].numpy()
            g = gf_change_map(raw.year(0), raw.year(1), cfg.gf_period)
            keep = (it.labels[0] != 255) & (it.labels[1] != 255)
            alise_scores.append(d[keep])
            gf_scores.append(g[keep])
            truth.append(it.change[keep])
            maps.append((d, g))
    s_a, s_g, lab = np.concatenate(alise_scores), np.concatenate(gf_scores), np.concatenate(truth)
    return {"auc_alise": auc_roc(s_a, lab), "auc_gf": auc_roc(s_g, lab), "maps": maps}


# -- datasets on disk ---------------------------------------------------------

def load_splits(cfg: TrainConfig):
    """Read ``train``/``val``/``test`` splits and normalize with training statistics.

    Returns ``(normalized, raw, stats)`` where the first two map split name to items.
    """
    root = Path(cfg.data_dir)
    raw = {name: read_dataset(root / name) for name in ("train", "val", "test") if (root / name).is_dir()}
    if "train" not in raw or not raw["train"]:
        raise FileNotFoundError(f"no training series under {root / 'train'}")
    stats_path = root / "stats.txt"
    if stats_path.exists():
        stats = NormStats.load(stats_path)
    else:
        stats = compute_stats([it.sits for it in raw["train"]])
    norm = {k: normalize_labeled(v, stats) for k, v in raw.items()}
    return norm, raw, stats


def sweep_grid(grid: str) -> list[dict]:
    """``"t_w=1,2,5;w_inv=0,1"`` -> list of override dicts (cartesian product)."""
    if not grid.strip():
        return [{}]
    keys, values = [], []
    for part in grid.split(";"):
        if part.strip():
            k, _, v = part.partition("=")
            keys.append(k.strip())
            values.append([x.strip() for x in v.split(",") if x.strip()])
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]
