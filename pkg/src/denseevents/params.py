"""Parameter store and checkpoint IO.

All learnable weights live in torch modules; ParamStore is a thin view that
enforces the invariants we rely on (unique names, finite values, grad/value
shape agreement) and owns the on-disk checkpoint format.

Checkpoint format: a single file holding
  magic | uint64 manifest length | manifest JSON (utf-8) | payload
where the payload is the concatenation of little-endian float32 records in
manifest order. The manifest carries model hyperparameters, the RNG seed and
one record {name, shape, offset, numel} per parameter. Round-trips are
bit-exact for float32 parameters.
"""

from __future__ import annotations

import json
import struct
from typing import Iterator

import numpy as np
import torch
from torch import nn

from .errors import CheckpointError

_MAGIC = b"DEVCKPT1"


class ParamStore:
    """Named view over a module's parameters with invariant checks."""

    def __init__(self, module: nn.Module):
        self.module = module
        names = [n for n, _ in module.named_parameters()]
        if len(names) != len(set(names)):
            raise ValueError("duplicate parameter names")

    def items(self) -> Iterator[tuple[str, nn.Parameter]]:
        return self.module.named_parameters()

    def num_parameters(self) -> int:
        return sum(p.numel() for _, p in self.items())

    def check_finite(self) -> None:
        for name, p in self.items():
            if not torch.isfinite(p).all():
                raise ValueError(f"non-finite values in parameter '{name}'")
            if p.grad is not None and p.grad.shape != p.shape:
                raise ValueError(f"grad shape mismatch for '{name}'")

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            name: p.detach().cpu().numpy().astype("<f4", copy=True)
            for name, p in self.items()
        }


def save_checkpoint(path: str, store: ParamStore, manifest: dict) -> None:
    """Write parameters plus a JSON manifest; see module docstring for layout."""
    arrays = store.state_arrays()
    records = []
    offset = 0
    payload_parts = []
    for name, arr in arrays.items():
        flat = np.ascontiguousarray(arr, dtype="<f4").ravel()
        records.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "numel": int(flat.size)}
        )
        payload_parts.append(flat.tobytes())
        offset += flat.size
    full_manifest = dict(manifest)
    full_manifest["records"] = records
    manifest_bytes = json.dumps(full_manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(manifest_bytes)))
        fh.write(manifest_bytes)
        for part in payload_parts:
            fh.write(part)


def _read_header(path: str) -> tuple[dict, int]:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
    return manifest, len(_MAGIC) + 8 + mlen


def read_manifest(path: str) -> dict:
    return _read_header(path)[0]


def load_checkpoint(path: str, store: ParamStore) -> dict:
    """Load parameters into the store's module; returns the manifest."""
    manifest, header = _read_header(path)
    raw = open(path, "rb").read()[header:]
    data = np.frombuffer(raw, dtype="<f4")
    params = dict(store.items())
    names = set(params)
    rec_names = {r["name"] for r in manifest["records"]}
    if names != rec_names:
        missing = sorted(names - rec_names)
        extra = sorted(rec_names - names)
        raise CheckpointError(f"{path}: parameter mismatch missing={missing} extra={extra}")
    with torch.no_grad():
        for rec in manifest["records"]:
            p = params[rec["name"]]
            if list(p.shape) != rec["shape"]:
                raise CheckpointError(
                    f"{path}: shape mismatch for {rec['name']}: "
                    f"{list(p.shape)} vs {rec['shape']}"
                )
            chunk = data[rec["offset"] : rec["offset"] + rec["numel"]]
            p.copy_(torch.from_numpy(chunk.copy()).reshape(p.shape).to(p.dtype))
    return manifest
