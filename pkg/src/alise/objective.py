"""Latent-space projector and the invariance / covariance losses."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class LossWeights:
    w_rec: float = 1.0
    w_inv: float = 1.0
    w_cov: float = 0.0

    def __post_init__(self):
        ws = (self.w_rec, self.w_inv, self.w_cov)
        if min(ws) < 0 or max(ws) <= 0:
            raise ValueError(f"loss weights must be non-negative with one positive, got {ws}")


class BatchStandardize(nn.Module):
    """Standardize each feature over the sample axis (no affine part)."""

    def __init__(self, num_features, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.register_buffer("running_mean", torch.zeros(num_features))
        self.register_buffer("running_var", torch.ones(num_features))

    def forward(self, x):
        if self.training:
            mean = x.mean(0)
            var = x.var(0, unbiased=False)
            with torch.no_grad():
                self.running_mean.lerp_(mean.to(self.running_mean.dtype), self.momentum)
                self.running_var.lerp_(var.to(self.running_var.dtype), self.momentum)
        else:
            mean, var = self.running_mean.to(x.dtype), self.running_var.to(x.dtype)
        return (x - mean) / torch.sqrt(var + self.eps)


class Projector(nn.Module):
    """Per pixel and query map d_model -> d_emb: linear, standardize, ReLU, linear."""

    def __init__(self, d_model=64, d_emb=128):
        super().__init__()
        self.fc1 = nn.Linear(d_model, d_emb)
        self.norm = BatchStandardize(d_emb)
        self.fc2 = nn.Linear(d_emb, d_emb)

    def forward(self, y):
        """``y`` [b, n_q, d_model, h, w] -> [b, n_q, d_emb, h, w]."""
        b, n, d, h, w = y.shape
        z = y.permute(0, 1, 3, 4, 2).reshape(-1, d)
        z = self.fc2(F.relu(self.norm(self.fc1(z))))
        return z.view(b, n, h, w, -1).permute(0, 1, 4, 2, 3)


def embed(y, projector: Projector):
    return projector(y)


def _samples(z):
    # [b, n_q, d_emb, h, w] -> [b * n_q * h * w, d_emb]
    return z.transpose(2, -1).reshape(-1, z.shape[2])


def invariance_loss(za, zb):
    """Mean over (b, n, i, j) of the squared L2 distance between embedded pixels."""
    if za.shape != zb.shape:
        raise ValueError(f"shape mismatch {tuple(za.shape)} vs {tuple(zb.shape)}")
    return (za - zb).pow(2).sum(2).mean()


def covariance_penalty(z):
    s = _samples(z)
    n, d = s.shape
    if n < 2:
        raise ValueError(f"covariance needs at least 2 samples, got {n}")
    s = s - s.mean(0)
    cov = s.T @ s / (n - 1)
    off = cov - torch.diag(torch.diagonal(cov))
    return off.pow(2).sum() / d


def covariance_loss(za, zb):
    return covariance_penalty(za) + covariance_penalty(zb)


def total_loss(l_inv, l_cov, l_rec, w: LossWeights):
    return w.w_inv * l_inv + w.w_cov * l_cov + w.w_rec * l_rec
