"""Versioned checkpoint container.

Layout: a UTF-8 header of ``key=value`` lines (config snapshot, then one
``tensor=name;shape;offset`` entry per tensor) closed by ``end``, followed by
the tensors as contiguous little-endian float32 data.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import torch

MAGIC = "ALISE-CHECKPOINT"
VERSION = 1


def save_checkpoint(path, state: dict[str, torch.Tensor], config_text: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [MAGIC, f"version={VERSION}"]
    lines += [f"config.{ln}" for ln in config_text.splitlines() if ln.strip()]
    blobs, offset = [], 0
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy().astype("<f4", copy=False)
        shape = ",".join(str(s) for s in arr.shape)
        lines.append(f"tensor={name};{shape};{offset}")
        blob = np.ascontiguousarray(arr).tobytes()
        blobs.append(blob)
        offset += len(blob)
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for blob in blobs:
            fh.write(blob)
    return path


def read_checkpoint(path) -> tuple[dict[str, torch.Tensor], str]:
    """Return ``(state, config_text)``."""
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if not raw.startswith(MAGIC.encode()) or cut < 0:
        raise ValueError(f"{path}: not an ALISE checkpoint")
    header = raw[:cut].decode("utf-8").splitlines()
    body = raw[cut + len(marker):]
    version = int(header[1].partition("=")[2])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    state, config = {}, []
    for line in header[2:]:
        key, _, value = line.partition("=")
        if key.startswith("config."):
            config.append(f"{key[len('config.'):]}={value}")
        elif key == "tensor":
            name, shape, offset = value.split(";")
            shape = tuple(int(s) for s in shape.split(",")) if shape else ()
            n = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(body, dtype="<f4", count=n, offset=int(offset)).reshape(shape)
            state[name] = torch.from_numpy(arr.astype(np.float32))
    return state, "".join(f"{c}\n" for c in config)


def load_into(module: torch.nn.Module, state: dict[str, torch.Tensor]) -> None:
    """Copy ``state`` into ``module``, requiring identical names and shapes."""
    own = module.state_dict()
    missing = sorted(set(own) - set(state))
    extra = sorted(set(state) - set(own))
    if missing or extra:
        raise ValueError(f"checkpoint mismatch: missing {missing}, unexpected {extra}")
    for name, t in state.items():
        if tuple(own[name].shape) != tuple(t.shape):
            raise ValueError(f"{name}: checkpoint shape {tuple(t.shape)} != model {tuple(own[name].shape)}")
    module.load_state_dict({k: v.to(own[k].dtype) for k, v in state.items()})


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
