"""Single-file checkpoints: magic, version, JSON manifest, float32 payload.

Layout (little-endian)::

    b"IGAE" | u32 version | u32 manifest_len | manifest JSON | payload

Each manifest entry records a role tag, dtype, shape and byte offset into the
payload. Free-form metadata (config, step counters) rides along under "meta".
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"IGAE"
VERSION = 1
ROLES = ("encoder", "decoder", "triplane", "mlp_field", "feature_decoder", "background",
         "optimizer")
_HEADER = struct.Struct("<4sII")


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class OverlapError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    arrays: dict  # name -> float32 ndarray
    roles: dict  # name -> role tag
    meta: dict = field(default_factory=dict)

    def by_role(self, role: str) -> dict:
        return {k: v for k, v in self.arrays.items() if self.roles[k] == role}


def encode_checkpoint(arrays: dict, roles: dict, meta: dict | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name in arrays:
        role = roles[name]
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r} for {name}")
        a = np.asarray(arrays[name], dtype="<f4", order="C")
        entries.append({"name": name, "role": role, "dtype": "float32",
                        "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    manifest = json.dumps({"entries": entries, "payload_bytes": offset, "meta": meta or {}},
                          sort_keys=True, separators=(",", ":")).encode()
    return _HEADER.pack(MAGIC, VERSION, len(manifest)) + manifest + b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < _HEADER.size:
        raise TruncatedError("checkpoint shorter than its header")
    magic, version, mlen = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint format version {version}, this build reads {VERSION}")
    start = _HEADER.size + mlen
    if len(blob) < start:
        raise TruncatedError("checkpoint manifest is truncated")
    try:
        manifest = json.loads(blob[_HEADER.size:start])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from None
    payload = memoryview(blob)[start:]
    spans = []
    arrays, roles = {}, {}
    for e in manifest["entries"]:
        if e.get("dtype") != "float32":
            raise CheckpointError(f"{e['name']}: unsupported dtype {e.get('dtype')}")
        count = int(np.prod(e["shape"], dtype=np.int64))
        lo, hi = int(e["offset"]), int(e["offset"]) + 4 * count
        spans.append((lo, hi, e["name"]))
        if lo < 0 or hi > len(payload):
            raise TruncatedError(f"{e['name']}: bytes {lo}..{hi} exceed payload of {len(payload)}")
        arrays[e["name"]] = np.frombuffer(payload[lo:hi], dtype="<f4").reshape(e["shape"]).copy()
        roles[e["name"]] = e["role"]
    spans.sort()
    for (lo0, hi0, n0), (lo1, hi1, n1) in zip(spans, spans[1:]):
        if lo1 < hi0:
            raise OverlapError(f"entries {n0} and {n1} overlap in the payload")
    if len(payload) < manifest.get("payload_bytes", 0):
        raise TruncatedError("payload shorter than declared")
    return Checkpoint(arrays, roles, manifest.get("meta", {}))


def save_checkpoint(path, arrays: dict, roles: dict, meta: dict | None = None) -> str:
    """Atomically write a checkpoint; returns its sha256."""
    blob = encode_checkpoint(arrays, roles, meta)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# model <-> checkpoint


def autoencoder_arrays(ae) -> tuple[dict, dict, dict]:
    arrays, roles = {}, {}
    for name, (role, t) in ae.named_parameters().items():
        arrays[name] = t.data
        roles[name] = role
    return arrays, roles, {"ae_spec": ae.spec.to_dict()}


def save_autoencoder(path, ae, meta: dict | None = None) -> str:
    arrays, roles, m = autoencoder_arrays(ae)
    m.update(meta or {})
    return save_checkpoint(path, arrays, roles, m)


def load_autoencoder(path):
    from .autoencoder import Autoencoder, AutoencoderSpec
    from .tensor import Rng

    ck = load_checkpoint(path)
    if "ae_spec" not in ck.meta:
        raise CheckpointError(f"{path} does not contain an autoencoder")
    spec = AutoencoderSpec(**{k: tuple(v) if isinstance(v, list) else v
                              for k, v in ck.meta["ae_spec"].items()})
    ae = Autoencoder.create(spec, Rng(0))
    assign(ae.named_parameters(), ck)
    return ae, ck


def assign(named: dict, ck: Checkpoint, roles=None):
    """Copy checkpoint arrays into Tensors (name -> (role, Tensor) or Tensor)."""
    for name, item in named.items():
        t = item[1] if isinstance(item, tuple) else item
        if roles is not None and ck.roles.get(name) not in roles:
            continue
        if name not in ck.arrays:
            raise CheckpointError(f"checkpoint is missing {name}")
        a = ck.arrays[name]
        if a.shape != t.shape:
            raise CheckpointError(f"{name}: shape {a.shape} in checkpoint, model has {t.shape}")
        t.data = a.astype(t.data.dtype)
