"""Two temporally intertwined views of one series.

The series is cut into ``n_w`` windows of ``t_w`` consecutive acquisitions;
even windows form view A and odd windows form view B.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Sits


@dataclass
class ViewPair:
    view_a: Sits
    view_b: Sits
    idx_a: np.ndarray
    idx_b: np.ndarray
    t_w: int
    n_w: int


def split_windows(t: int, t_w: int) -> tuple[int, int]:
    """Return ``(n_w, usable_t)``; ``n_w`` is rounded down to an even count."""
    if t_w < 1:
        raise ValueError(f"t_w must be positive, got {t_w}")
    if t < 2 * t_w:
        raise ValueError(f"a series of {t} dates cannot hold two windows of {t_w}")
    n_w = (t // t_w) // 2 * 2
    return n_w, n_w * t_w


def interleave(n_w: int, t_w: int) -> tuple[np.ndarray, np.ndarray]:
    if n_w % 2:
        raise ValueError(f"the number of windows must be even, got {n_w}")
    idx = np.arange(n_w * t_w).reshape(n_w, t_w)
    return idx[0::2].ravel(), idx[1::2].ravel()


def make_views(s: Sits, t_w: int) -> ViewPair:
    n_w, _ = split_windows(s.t, t_w)
    idx_a, idx_b = interleave(n_w, t_w)
    return ViewPair(s.take(idx_a), s.take(idx_b), idx_a, idx_b, t_w, n_w)
