"""Aligned SITS encoder.

A per-image U-Net followed by a per-pixel temporal transformer (the
spectral-spatial-temporal encoder) produces one feature vector per date and
pixel. A temporal projector then lets ``n_q`` learnable queries cross-attend
over the dates, so the output has ``n_q`` pseudo-dates whatever the input
length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class EncoderConfig:
    in_channels: int = 10
    d_model: int = 64
    n_q: int = 10
    unet_depth: int = 1
    n_layers: int = 1
    n_head: int = 4
    d_hidden: int = 128
    dropout: float = 0.0
    proj_heads: int = 2
    tau: float = 10000.0


def positional_encoding(delta: torch.Tensor, d_model: int, tau: float = 10000.0) -> torch.Tensor:
    """Sinusoidal code of day offsets, shape ``delta.shape + (d_model,)``."""
    if d_model % 2:
        raise ValueError(f"d_model must be even, got {d_model}")
    delta = torch.as_tensor(delta)
    dtype = delta.dtype if delta.is_floating_point() else torch.get_default_dtype()
    freq = tau ** (-torch.arange(0, d_model, 2, dtype=torch.float64) / d_model)
    angle = delta.to(torch.float64)[..., None] * freq
    pe = torch.stack([torch.sin(angle), torch.cos(angle)], dim=-1).flatten(-2)
    return pe.to(dtype)


def attend(q, k, v, scale, record=None):
    """softmax(q kᵀ * scale) v over the last two dims; ``record`` gets the weights."""
    w = torch.softmax(torch.matmul(q, k.transpose(-1, -2)) * scale, dim=-1)
    if record is not None:
        record.append(w.detach())
    return torch.matmul(w, v)


class _Recorder:
    """Mixin letting tests collect attention weights."""

    record_attention = False

    def _sink(self):
        if not self.record_attention:
            return None
        if not hasattr(self, "attention_weights"):
            self.attention_weights = []
        return self.attention_weights


class ConvBlock(nn.Module):
    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1, stride=stride) if (cin != cout or stride != 1) else nn.Identity()

    def forward(self, x):
        return F.gelu(self.skip(x) + self.conv2(F.gelu(self.conv1(x))))


class UNet(nn.Module):
    """Per-image spatial-spectral encoder returning full-resolution features."""

    def __init__(self, in_channels, d_model, depth):
        super().__init__()
        self.inc = nn.Conv2d(in_channels, d_model, 3, padding=1)
        self.down = nn.ModuleList(ConvBlock(d_model, d_model, stride=2) for _ in range(depth))
        self.up = nn.ModuleList(ConvBlock(2 * d_model, d_model) for _ in range(depth))
        self.depth = depth

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % 2 ** self.depth or w % 2 ** self.depth:
            raise ValueError(f"spatial size {h}x{w} not divisible by 2**{self.depth}")
        x = F.gelu(self.inc(x))
        skips = []
        for blk in self.down:
            skips.append(x)
            x = blk(x)
        for blk in self.up:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = blk(torch.cat([x, skips.pop()], dim=1))
        return x


class SelfAttention(_Recorder, nn.Module):
    def __init__(self, d_model, n_head, dropout=0.0):
        super().__init__()
        if d_model % n_head:
            raise ValueError("d_model must be divisible by n_head")
        self.n_head = n_head
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        n, t, d = x.shape
        q, k, v = self.qkv(x).view(n, t, 3, self.n_head, d // self.n_head).permute(2, 0, 3, 1, 4)
        y = attend(q, k, v, 1.0 / math.sqrt(d // self.n_head), self._sink())
        return self.drop(self.out(y.transpose(1, 2).reshape(n, t, d)))


class TransformerLayer(nn.Module):
    def __init__(self, d_model, n_head, d_hidden, dropout=0.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = SelfAttention(d_model, n_head, dropout)
        self.norm2 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(
            nn.Linear(d_model, d_hidden), nn.GELU(), nn.Dropout(dropout), nn.Linear(d_hidden, d_model)
        )
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.drop(self.ff(self.norm2(x)))


class SSTE(nn.Module):
    """Spectral-spatial-temporal encoder: [b, t, c, h, w] -> [b, t, d_model, h, w]."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.unet = UNet(cfg.in_channels, cfg.d_model, cfg.unet_depth)
        self.layers = nn.ModuleList(
            TransformerLayer(cfg.d_model, cfg.n_head, cfg.d_hidden, cfg.dropout) for _ in range(cfg.n_layers)
        )
        self.norm = nn.LayerNorm(cfg.d_model)

    def forward(self, x, delta):
        b, t, c, h, w = x.shape
        if c != self.cfg.in_channels:
            raise ValueError(f"expected {self.cfg.in_channels} channels, got {c}")
        f = self.unet(x.reshape(b * t, c, h, w)).view(b, t, -1, h, w)
        d = f.shape[2]
        tokens = f.permute(0, 3, 4, 1, 2).reshape(b * h * w, t, d)
        pe = positional_encoding(delta, d, self.cfg.tau).to(tokens.dtype)
        tokens = tokens + pe[:, None, None].expand(b, h, w, t, d).reshape(b * h * w, t, d)
        for layer in self.layers:
            tokens = layer(tokens)
        tokens = self.norm(tokens)
        return tokens.view(b, h, w, t, d).permute(0, 3, 4, 1, 2)


class TemporalProjector(_Recorder, nn.Module):
    """Learnable queries cross-attending over dates, per pixel.

    Keys and values are the SSTE features themselves; only the queries are
    projected. Channels are split evenly across heads.
    """

    def __init__(self, d_model, n_q, n_head=2):
        super().__init__()
        if d_model % n_head:
            raise ValueError("d_model must be divisible by the projector head count")
        self.queries = nn.Parameter(torch.empty(n_q, d_model))
        self.q_proj = nn.Linear(d_model, d_model, bias=False)
        self.n_head = n_head
        nn.init.trunc_normal_(self.queries, std=0.02)
        nn.init.trunc_normal_(self.q_proj.weight, std=0.02)

    def forward(self, psi):
        """``psi`` [..., t, d_model] -> [..., n_q, d_model]."""
        *lead, t, d = psi.shape
        n_q, dh = self.queries.shape[0], d // self.n_head
        q = self.q_proj(self.queries).view(n_q, self.n_head, dh).transpose(0, 1)
        kv = psi.reshape(*lead, t, self.n_head, dh).transpose(-3, -2)
        y = attend(q, kv, kv, 1.0 / math.sqrt(d), self._sink())
        return y.transpose(-3, -2).reshape(*lead, n_q, d)


class Alise(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.sste = SSTE(cfg)
        self.projector = TemporalProjector(cfg.d_model, cfg.n_q, cfg.proj_heads)

    def forward(self, x, delta):
        """``x`` [b, t, c, h, w], ``delta`` [b, t] day offsets -> [b, n_q, d_model, h, w]."""
        psi = self.sste(x, delta)
        y = self.projector(psi.permute(0, 3, 4, 1, 2))
        return y.permute(0, 3, 4, 1, 2)


def series_tensors(s, dtype=torch.float32):
    """``(values [1, t, c, h, w], delta [1, t])`` tensors for one series."""
    from .data import delta_t

    x = torch.from_numpy(s.values).to(dtype)[None]
    return x, torch.from_numpy(delta_t(s.dates))[None]


def encode(model: Alise, series) -> torch.Tensor:
    """Encode series of possibly different lengths into one aligned batch."""
    dtype = next(model.parameters()).dtype
    return torch.cat([model(*series_tensors(s, dtype)) for s in series])
