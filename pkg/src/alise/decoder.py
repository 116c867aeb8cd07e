"""Cross-reconstruction decoder and validity-masked reconstruction loss."""

from __future__ import annotations

import logging
import math

import torch
import torch.nn as nn

from .encoder import _Recorder, attend, positional_encoding

log = logging.getLogger(__name__)


class Decoder(_Recorder, nn.Module):
    """Masked-token queries attend over the n_q latent slots of each pixel.

    Keys are ``Y W_2``, values are the raw latent vectors, and a per-pixel
    linear head maps d_model features back to reflectance bands.
    """

    def __init__(self, d_model=64, out_channels=10, tau=10000.0):
        super().__init__()
        self.mask_token = nn.Parameter(torch.empty(d_model))
        self.q_proj = nn.Linear(d_model, d_model, bias=False)
        self.k_proj = nn.Linear(d_model, d_model, bias=False)
        self.out_head = nn.Linear(d_model, out_channels)
        self.tau = tau
        nn.init.trunc_normal_(self.mask_token, std=0.02)
        nn.init.trunc_normal_(self.q_proj.weight, std=0.02)
        nn.init.trunc_normal_(self.k_proj.weight, std=0.02)

    def build_queries(self, delta):
        """``delta`` [..., T] -> queries [..., T, d_model]."""
        pe = positional_encoding(delta, self.mask_token.shape[0], self.tau)
        return self.mask_token + pe.to(self.mask_token.dtype)

    def cross_attend(self, q, y):
        """``q`` [..., T, d], ``y`` [..., n_q, d] -> [..., T, d]."""
        d = y.shape[-1]
        return attend(self.q_proj(q), self.k_proj(y), y, 1.0 / math.sqrt(d), self._sink())

    def forward(self, y, delta):
        """``y`` [b, n_q, d, h, w], ``delta`` [b, T] -> reconstruction [b, T, c, h, w]."""
        q = self.build_queries(delta)[:, None, None]  # [b, 1, 1, T, d]
        pix = y.permute(0, 3, 4, 1, 2)  # [b, h, w, n_q, d]
        out = self.out_head(self.cross_attend(q, pix))  # [b, h, w, T, c]
        return out.permute(0, 3, 4, 1, 2)


def decode(y, delta, decoder: Decoder):
    return decoder(y, delta)


def masked_mse(x, xhat, valid):
    """Validity-masked MSE averaged over dates.

    ``x``/``xhat`` are [b, T, c, h, w] (or unbatched [T, c, h, w]) and
    ``valid`` the matching [b, T, h, w] mask. Each date contributes the sum of
    squared errors over its clear pixels and all channels divided by its clear
    pixel count; dates without clear pixels are left out of the date mean.
    """
    if x.dim() == 4:
        x, xhat, valid = x[None], xhat[None], valid[None]
    if x.shape != xhat.shape or valid.shape != x.shape[:2] + x.shape[3:]:
        raise ValueError(f"shape mismatch: x {tuple(x.shape)}, xhat {tuple(xhat.shape)}, valid {tuple(valid.shape)}")
    valid = valid.bool()
    diff = torch.where(valid[:, :, None], x - xhat, torch.zeros((), dtype=x.dtype))
    sq = diff.pow(2).sum(dim=(2, 3, 4))  # [b, T]
    n_valid = valid.sum(dim=(2, 3))  # [b, T]
    has = n_valid > 0
    per_date = torch.where(has, sq / n_valid.clamp(min=1), torch.zeros((), dtype=sq.dtype))
    n_dates = has.sum(1)
    if not bool((n_dates > 0).any()):
        log.warning("masked_mse: every date is fully invalid, returning 0")
        return sq.sum() * 0.0
    per_series = per_date.sum(1) / n_dates.clamp(min=1)
    return per_series[n_dates > 0].mean()


def cross_recon_loss(view_a, view_b, ya, yb, decoder: Decoder):
    """Reconstruct each view from the other view's latent representation.

    ``view_a``/``view_b`` are ``(x, delta, valid)`` tensor triples.
    """
    xa, da, ma = view_a
    xb, db, mb = view_b
    return 0.5 * (masked_mse(xa, decoder(yb, da), ma) + masked_mse(xb, decoder(ya, db), mb))
