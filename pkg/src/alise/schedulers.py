"""Learning-rate schedules used for pre-training and downstream training."""

from __future__ import annotations

import math


def cosine_warm_restarts(epoch: float, t0: int = 2, lr_max: float = 1e-3, lr_min: float = 0.0, t_mult: int = 2) -> float:
    """Cosine annealing with warm restarts; cycle ``i`` lasts ``t0 * t_mult**i`` epochs.

    ``epoch`` may be fractional (step / steps_per_epoch).
    """
    if t0 < 1:
        raise ValueError(f"t0 must be >= 1, got {t0}")
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if t_mult == 1:
        t_cur, t_i = math.fmod(epoch, t0), t0
    else:
        # closed form for the cycle index, then guard against float rounding
        i = int(math.log(epoch / t0 * (t_mult - 1) + 1, t_mult))
        start = t0 * (t_mult ** i - 1) / (t_mult - 1)
        if epoch < start:
            i -= 1
        elif epoch >= start + t0 * t_mult ** i:
            i += 1
        start = t0 * (t_mult ** i - 1) / (t_mult - 1)
        t_cur, t_i = epoch - start, t0 * t_mult ** i
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * t_cur / t_i))


class PlateauScheduler:
    """Multiply the learning rate by ``decay`` after ``patience`` rounds without improvement."""

    def __init__(self, lr: float = 1e-4, patience: int = 10, decay: float = 0.05, mode: str = "min"):
        if patience < 1:
            raise ValueError(f"patience must be >= 1, got {patience}")
        if mode not in ("min", "max"):
            raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
        self.lr = lr
        self.patience = patience
        self.decay = decay
        self.mode = mode
        self.best = None
        self.bad_rounds = 0

    def step(self, metric: float) -> float:
        better = self.best is None or (metric < self.best if self.mode == "min" else metric > self.best)
        if better:
            self.best = metric
            self.bad_rounds = 0
        else:
            self.bad_rounds += 1
            if self.bad_rounds >= self.patience:
                self.lr *= self.decay
                self.bad_rounds = 0
        return self.lr


def plateau_scheduler(history, lr: float = 1e-4, patience: int = 10, decay: float = 0.05, mode: str = "min") -> float:
    """Learning rate after replaying a validation-metric history."""
    sched = PlateauScheduler(lr, patience, decay, mode)
    for m in history:
        sched.step(m)
    return sched.lr
