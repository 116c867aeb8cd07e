"""Training configuration and its key=value file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .data import SynthConfig
from .encoder import EncoderConfig
from .objective import LossWeights


@dataclass
class TrainConfig:
    # data
    data_dir: str = "data"
    out_dir: str = "runs/default"
    size: int = 16
    n_dates: int = 20
    # model (pre-training defaults of the reference setup; desk scale overrides d_model/n_q)
    t_w: int = 2
    n_q: int = 10
    d_model: int = 64
    d_emb: int = 128
    unet_depth: int = 1
    n_layers: int = 1
    n_head: int = 4
    d_hidden: int = 128
    dropout: float = 0.0
    in_channels: int = 10
    # pre-training
    batch_size: int = 2
    epochs: int = 30
    w_rec: float = 1.0
    w_inv: float = 1.0
    w_cov: float = 0.0
    lr_max: float = 1e-3
    t0: int = 2
    t_mult: int = 2
    seed: int = 0
    max_series: int = 0
    # downstream
    n_classes: int = 5
    checkpoint: str = ""
    probe_lr: float = 1e-4
    probe_epochs: int = 100
    probe_batch: int = 2
    finetune_epochs: int = 30
    patience: int = 10
    decay: float = 0.05
    subset: int = 0
    probe_year: int = 0
    gf_period: int = 5
    # sweep, e.g. "t_w=1,2,5;w_inv=0,1"
    grid: str = ""
    seeds: str = "0"

    def __post_init__(self):
        for name in ("t_w", "n_q", "d_model", "d_emb", "batch_size", "epochs", "n_dates", "size", "t0"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % 2:
            raise ValueError("d_model must be even")
        if self.n_dates < 2 * self.t_w:
            raise ValueError(f"n_dates={self.n_dates} cannot hold two windows of t_w={self.t_w}")
        self.loss_weights()

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            in_channels=self.in_channels, d_model=self.d_model, n_q=self.n_q,
            unet_depth=self.unet_depth, n_layers=self.n_layers, n_head=self.n_head,
            d_hidden=self.d_hidden, dropout=self.dropout,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.w_rec, self.w_inv, self.w_cov)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in dataclasses.fields(self))


def _coerce(cls, key, value: str):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    if key not in types:
        raise KeyError(f"unknown config key {key!r}")
    typ = types[key]
    if typ in ("int", int):
        return int(value)
    if typ in ("float", float):
        return float(value)
    if typ in ("bool", bool):
        if value.lower() not in ("true", "false", "1", "0"):
            raise ValueError(f"{key}: not a boolean: {value!r}")
        return value.lower() in ("true", "1")
    return value


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def from_kv(cls, kv: dict[str, str], **overrides):
    args = {k: _coerce(cls, k, v) for k, v in kv.items()}
    args.update(overrides)
    return cls(**args)


def load_config(path, **overrides) -> TrainConfig:
    return from_kv(TrainConfig, parse_kv(Path(path).read_text(encoding="utf-8")), **overrides)


def load_synth_config(path) -> tuple[SynthConfig, dict[str, int]]:
    """Synthetic dataset config; ``n_train``/``n_val``/``n_test`` set the split sizes."""
    kv = parse_kv(Path(path).read_text(encoding="utf-8"))
    splits = {k: int(kv.pop(k)) for k in ("n_train", "n_val", "n_test") if k in kv}
    return from_kv(SynthConfig, kv), splits
