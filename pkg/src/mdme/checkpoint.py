"""Parameter checkpoints: JSON manifest plus raw little-endian float64 payload.

A checkpoint directory holds `checkpoint.json` (ordered tensor names,
shapes, byte offsets, plus caller metadata) and `checkpoint.bin` (the
concatenated '<f8' buffers in manifest order).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .tensor import Tensor

_MANIFEST = "checkpoint.json"
_PAYLOAD = "checkpoint.bin"


def save_checkpoint(dirpath, params: dict[str, Tensor], meta: dict | None = None) -> Path:
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    chunks = []
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name].data, dtype="<f8")
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": offset,
            "count": int(arr.size),
        })
        chunks.append(arr.tobytes())
        offset += arr.size * 8
    manifest = {
        "format": "mdme-checkpoint",
        "version": 1,
        "dtype": "<f8",
        "meta": meta or {},
        "tensors": entries,
    }
    (dirpath / _MANIFEST).write_text(json.dumps(manifest, indent=2))
    (dirpath / _PAYLOAD).write_bytes(b"".join(chunks))
    return dirpath


def load_checkpoint(dirpath) -> tuple[dict[str, Tensor], dict]:
    dirpath = Path(dirpath)
    mpath, ppath = dirpath / _MANIFEST, dirpath / _PAYLOAD
    if not mpath.exists() or not ppath.exists():
        raise ConfigError(f"no checkpoint at {dirpath} (need {_MANIFEST} and {_PAYLOAD})")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{mpath}: invalid JSON: {e}") from None
    if manifest.get("format") != "mdme-checkpoint":
        raise ParseError(f"{mpath}: not an mdme checkpoint manifest")
    payload = ppath.read_bytes()
    params: dict[str, Tensor] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = entry["count"]
        if int(np.prod(shape, dtype=int)) != count:
            raise ParseError(f"{mpath}: tensor {entry['name']!r} shape {shape} vs count {count}")
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        params[entry["name"]] = Tensor(arr.reshape(shape).astype(np.float64))
    return params, manifest.get("meta", {})
