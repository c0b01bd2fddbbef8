"""Binary checkpoint format for model parameters and adapters.

Layout, stable and documented:

    bytes 0..7   magic b"CTGCKPT1"
    bytes 8..11  uint32 little-endian header length H
    bytes 12..12+H  UTF-8 JSON header:
        {"meta": {...}, "tensors": [{"name", "shape", "offset", "nbytes"}, ...]}
    remainder    concatenated float32 little-endian tensor payloads

Values are stored as float32 regardless of in-memory dtype, so float32
models round-trip bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, StateError

MAGIC = b"CTGCKPT1"


def _as_array(v):
    return v.value if isinstance(v, Tensor) else np.asarray(v)


def save_checkpoint(path, tensors: dict, meta: dict | None = None):
    """Write name -> array mappings in insertion order."""
    entries = []
    payloads = []
    offset = 0
    for name, v in tensors.items():
        arr = np.ascontiguousarray(_as_array(v), dtype="<f4")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path):
    """Returns (tensors: {name: float32 ndarray}, meta: dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ContractError(f"{path} is not a checkpoint file (bad magic)")
    header_len = int(np.frombuffer(blob[8:12], dtype="<u4")[0])
    header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    base = 12 + header_len
    tensors = {}
    for e in header["tensors"]:
        raw = blob[base + e["offset"] : base + e["offset"] + e["nbytes"]]
        tensors[e["name"]] = np.frombuffer(raw, dtype="<f4").reshape(e["shape"]).copy()
    return tensors, header.get("meta", {})


def params_checksum(tensors: dict) -> str:
    """Order-independent digest of (name, bytes) pairs; freeze-contract audits."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(_as_array(tensors[name]))
        h.update(name.encode("utf-8"))
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def save_model(path, model, meta: dict | None = None):
    model.ensure_built()
    save_checkpoint(path, model.parameters(), meta=meta)


def load_model_params(path, model):
    """Load a base checkpoint into an already-built model of matching shape."""
    tensors, _ = load_checkpoint(path)
    params = model.parameters()
    missing = set(params) - set(tensors)
    extra = set(tensors) - set(params)
    if missing or extra:
        raise ContractError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for name, t in params.items():
        if tuple(tensors[name].shape) != t.value.shape:
            raise ContractError(f"checkpoint tensor {name} has shape {tensors[name].shape}, expected {t.value.shape}")
        t.value = tensors[name].astype(t.value.dtype)
    return model


def save_adapters(path, model):
    """Adapters as (layer, target, A, B) tuples in their own file."""
    adapters = getattr(model, "adapters_", None)
    if not adapters:
        raise StateError("model has no adapters to save")
    tensors = {}
    for a in adapters:
        tensors[f"{a.layer}.{a.target}.A"] = a.A
        tensors[f"{a.layer}.{a.target}.B"] = a.B
    meta = {"r": adapters[0].r, "alpha": adapters[0].alpha}
    save_checkpoint(path, tensors, meta=meta)


def load_adapters(path, model):
    """Attach adapters from file to a base model, reconstructing the tuned model."""
    from .models.tinylm import attach_lora

    tensors, meta = load_checkpoint(path)
    attach_lora(model, r=int(meta["r"]), alpha=float(meta["alpha"]))
    for a in model.adapters_:
        a.A.value = tensors[f"{a.layer}.{a.target}.A"].astype(a.A.value.dtype)
        a.B.value = tensors[f"{a.layer}.{a.target}.B"].astype(a.B.value.dtype)
    return model
