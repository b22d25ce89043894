"""Versioned on-disk container: a fixed magic header followed by an ``.npz`` payload."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .errors import UsageError

MAGIC = b"SPECSMOOTH"
VERSION = 1
_KIND_WIDTH = 8


def write_artifact(path, kind: str, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    path = Path(path)
    header = MAGIC + bytes([VERSION]) + kind.encode("ascii").ljust(_KIND_WIDTH, b" ")
    buf = io.BytesIO()
    payload = dict(arrays)
    payload["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(buf, **payload)
    path.write_bytes(header + buf.getvalue())
    return path


def read_artifact(path, kind: str | None = None) -> tuple[str, dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    head = len(MAGIC) + 1 + _KIND_WIDTH
    if len(raw) < head or not raw.startswith(MAGIC):
        raise UsageError(f"{path}: not a spectral-smooth artifact (bad magic header)")
    version = raw[len(MAGIC)]
    if version != VERSION:
        raise UsageError(f"{path}: artifact version {version}, this build reads {VERSION}")
    found = raw[len(MAGIC) + 1 : head].decode("ascii").strip()
    if kind is not None and found != kind:
        raise UsageError(f"{path}: expected a {kind!r} artifact, found {found!r}")
    with np.load(io.BytesIO(raw[head:]), allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
        meta = json.loads(npz["__meta__"].tobytes().decode("utf-8"))
    return found, arrays, meta
