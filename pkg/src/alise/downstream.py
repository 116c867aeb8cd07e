"""Downstream evaluation: linear probe, change maps and metrics."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
from scipy.stats import rankdata

from .data import BACKGROUND, Sits


class ProbeHead(nn.Module):
    """Single affine layer on the flattened n_q * d_model features of a pixel."""

    def __init__(self, n_q, d_model, n_classes):
        super().__init__()
        if n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {n_classes}")
        self.n_q, self.d_model = n_q, d_model
        self.linear = nn.Linear(n_q * d_model, n_classes)

    def forward(self, y):
        """``y`` [b, n_q, d_model, h, w] -> logits [b, k, h, w]."""
        b, n, d, h, w = y.shape
        if (n, d) != (self.n_q, self.d_model):
            raise ValueError(f"latent shape ({n}, {d}) does not match head ({self.n_q}, {self.d_model})")
        feats = y.reshape(b, n * d, h, w).permute(0, 2, 3, 1)
        return self.linear(feats).permute(0, 3, 1, 2)


def probe_forward(y, head: ProbeHead):
    return head(y)


def probe_loss(logits, labels):
    return nn.functional.cross_entropy(logits, labels.long(), ignore_index=BACKGROUND)


def change_map(y1, y2):
    """Mean over pseudo-dates and channels of the squared latent difference."""
    if y1.shape != y2.shape:
        raise ValueError(f"shape mismatch {tuple(y1.shape)} vs {tuple(y2.shape)}")
    diff = (y1 - y2) ** 2
    # pseudo-date and channel axes are (-4, -3) with or without a batch axis
    if isinstance(diff, torch.Tensor):
        return diff.mean(dim=(-4, -3))
    return diff.mean(axis=(-4, -3))


@dataclass
class GapFilled:
    values: np.ndarray  # [g, c, h, w]
    grid_days: np.ndarray
    missing: np.ndarray  # [h, w], True where a pixel had no valid sample


def gapfill(s: Sits, period_days: int = 5, year: int | None = None) -> GapFilled:
    """Linear interpolation of valid samples onto a regular annual grid.

    Days are counted from January 1st of ``year`` (default: year of the first
    acquisition). Outside the valid range the nearest valid value is held.
    """
    year = s.dates[0].year if year is None else year
    origin = dt.date(year, 1, 1)
    days = np.array([(d - origin).days for d in s.dates], dtype=np.float64)
    grid = np.arange(0, 365, period_days, dtype=np.float64)
    t, c, h, w = s.values.shape
    out = np.zeros((grid.size, c, h, w))
    missing = np.zeros((h, w), dtype=bool)
    for i in range(h):
        for j in range(w):
            ok = s.validity[:, i, j]
            if not ok.any():
                missing[i, j] = True
                continue
            xs, vs = days[ok], s.values[ok, :, i, j]
            for ch in range(c):
                out[:, ch, i, j] = np.interp(grid, xs, vs[:, ch])
    return GapFilled(out, grid, missing)


def gf_change_map(s1: Sits, s2: Sits, period_days: int = 5) -> np.ndarray:
    """Mean over grid dates and channels of the squared gap-filled difference."""
    a, b = gapfill(s1, period_days), gapfill(s2, period_days)
    return ((a.values - b.values) ** 2).mean(axis=(0, 1))


def auc_roc(scores, labels) -> float:
    """Rank-statistic ROC AUC; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative samples")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def f1_scores(pred, truth, n_classes: int | None = None):
    """Per-class F1 and their macro mean over classes present in ``truth``.

    Returns ``(f1 [k], macro)``; classes absent from the truth get NaN.
    """
    pred = np.asarray(pred).ravel().astype(np.int64)
    truth = np.asarray(truth).ravel().astype(np.int64)
    keep = truth != BACKGROUND
    if not keep.any():
        raise ValueError("no labeled pixel left after removing background")
    pred, truth = pred[keep], truth[keep]
    k = n_classes or int(max(truth.max(), pred.max())) + 1
    cm = np.bincount(truth * k + pred, minlength=k * k).reshape(k, k)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(0) - tp
    fn = cm.sum(1) - tp
    present = cm.sum(1) > 0
    f1 = np.full(k, np.nan)
    f1[present] = 2 * tp[present] / (2 * tp[present] + fp[present] + fn[present])
    return f1, float(np.nanmean(f1))
