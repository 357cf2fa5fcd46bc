"""Versioned checkpoint container.

Layout: an 8-byte big-endian header length, a canonical JSON header (version
tag, config, tensor manifest, optimizer/scheduler scalars, RNG state), the
raw little-endian float64 tensor blob, and a trailing SHA-256 digest of
everything before it.  Loading verifies the digest and every tensor shape,
so truncation, bit corruption, and config mismatches all fail loudly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError
from .nn import AdamState, PlateauState
from .model import GnnConfig, GnnParams

FORMAT_VERSION = "polyrep-checkpoint-1"


@dataclass
class Checkpoint:
    config: dict
    params: GnnParams
    adam: AdamState
    scheduler: PlateauState
    best_epoch: int
    rng_state: dict
    version: str = FORMAT_VERSION


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    tensors = []
    blob = bytearray()
    offset = 0

    def add(name, arr):
        nonlocal offset
        data = np.ascontiguousarray(arr, dtype=np.float64).tobytes()
        tensors.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)}
        )
        blob.extend(data)
        offset += len(data)

    for name, arr in ckpt.params.named_state():
        add(name, arr)
    for idx, m in enumerate(ckpt.adam.m):
        add(f"adam.m.{idx}", m)
    for idx, v in enumerate(ckpt.adam.v):
        add(f"adam.v.{idx}", v)

    header = {
        "version": ckpt.version,
        "config": ckpt.config,
        "tensors": tensors,
        "adam": {"t": ckpt.adam.t},
        "scheduler": {
            "lr": ckpt.scheduler.lr,
            "factor": ckpt.scheduler.factor,
            "patience": ckpt.scheduler.patience,
            "min_lr": ckpt.scheduler.min_lr,
            "best": None if ckpt.scheduler.best == float("inf") else ckpt.scheduler.best,
            "bad_epochs": ckpt.scheduler.bad_epochs,
        },
        "best_epoch": ckpt.best_epoch,
        "rng_state": ckpt.rng_state,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = len(header_bytes).to_bytes(8, "big") + header_bytes + bytes(blob)
    digest = hashlib.sha256(payload).digest()
    with open(path, "wb") as fp:
        fp.write(payload)
        fp.write(digest)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fp:
        raw = fp.read()
    if len(raw) < 40:
        raise CheckpointError("file too short to be a checkpoint")
    payload, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError("digest mismatch: checkpoint is corrupt or truncated")
    header_len = int.from_bytes(payload[:8], "big")
    if 8 + header_len > len(payload):
        raise CheckpointError("truncated header")
    try:
        header = json.loads(payload[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from exc
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"version mismatch: file has {header.get('version')!r}, "
            f"expected {FORMAT_VERSION!r}"
        )
    blob = payload[8 + header_len :]

    loaded = {}
    for spec in header["tensors"]:
        start, nbytes = spec["offset"], spec["nbytes"]
        if start + nbytes > len(blob):
            raise CheckpointError(f"tensor {spec['name']} extends past end of blob")
        arr = np.frombuffer(blob[start : start + nbytes], dtype=np.float64).copy()
        loaded[spec["name"]] = arr.reshape(spec["shape"])

    config = header["config"]
    gnn_keys = {f.name for f in GnnConfig.__dataclass_fields__.values()}
    params = GnnParams(GnnConfig(**{k: v for k, v in config.items() if k in gnn_keys}))
    for name, arr in params.named_state():
        if name not in loaded:
            raise CheckpointError(f"missing tensor {name}")
        if loaded[name].shape != arr.shape:
            raise CheckpointError(
                f"dimension mismatch for {name}: file {loaded[name].shape}, "
                f"model {arr.shape}"
            )
        arr[...] = loaded[name]

    m, v = [], []
    for idx, p in enumerate(params.parameters()):
        for store, key in ((m, f"adam.m.{idx}"), (v, f"adam.v.{idx}")):
            if key not in loaded:
                raise CheckpointError(f"missing tensor {key}")
            if loaded[key].shape != p.shape:
                raise CheckpointError(f"dimension mismatch for {key}")
            store.append(loaded[key])
    adam = AdamState(m=m, v=v, t=int(header["adam"]["t"]))

    sch = header["scheduler"]
    scheduler = PlateauState(
        lr=float(sch["lr"]),
        factor=float(sch["factor"]),
        patience=int(sch["patience"]),
        min_lr=float(sch["min_lr"]),
        best=float("inf") if sch["best"] is None else float(sch["best"]),
        bad_epochs=int(sch["bad_epochs"]),
    )
    return Checkpoint(
        config=config,
        params=params,
        adam=adam,
        scheduler=scheduler,
        best_epoch=int(header["best_epoch"]),
        rng_state=header["rng_state"],
        version=header["version"],
    )
