"""``FANSv1`` checkpoint container.

Layout (little-endian)::

    b"FANSv1\\n"
    u32 config_len, config JSON (utf-8, sorted keys)
    u32 n_tensors
    per tensor: u32 name_len, name, u32 ndim, u32 dims..., float64 data (C order)

A JSON sidecar next to the checkpoint repeats the config for inspection.
"""
import json
import struct
from pathlib import Path

import numpy as np

from .masking import FansConfig
from .model import FansModel, param_shapes

MAGIC = b"FANSv1\n"


class CheckpointError(ValueError):
    pass


def _config_blob(model, extra):
    doc = {"config": model.config.to_dict(), "extra": extra or {}}
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def dump_bytes(model, extra=None):
    out = [MAGIC]
    blob = _config_blob(model, extra)
    out.append(struct.pack("<I", len(blob)))
    out.append(blob)
    out.append(struct.pack("<I", len(model.params)))
    for name, arr in model.params.items():
        enc = name.encode("utf-8")
        out.append(struct.pack("<I", len(enc)))
        out.append(enc)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def load_bytes(buf):
    if not buf.startswith(MAGIC):
        raise CheckpointError("not a FANSv1 checkpoint (bad magic)")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    (clen,) = take("<I")
    doc = json.loads(buf[pos:pos + clen].decode("utf-8"))
    pos += clen
    config = FansConfig(**doc["config"])
    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (nlen,) = take("<I")
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) * 8
        if pos + size > len(buf):
            raise CheckpointError(f"truncated tensor {name}")
        params[name] = np.frombuffer(buf, dtype="<f8", count=size // 8, offset=pos).reshape(shape).astype(np.float64)
        pos += size
    if pos != len(buf):
        raise CheckpointError("trailing bytes after last tensor")
    if list(params) != list(param_shapes(config)):
        raise CheckpointError("tensor list does not match the stored configuration")
    return FansModel(config, params), doc.get("extra", {})


def save(path, model, extra=None):
    path = Path(path)
    path.write_bytes(dump_bytes(model, extra))
    sidecar = {"format": "FANSv1", "config": model.config.to_dict(), "extra": extra or {},
               "tensors": {k: list(v.shape) for k, v in model.params.items()}}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load(path):
    return load_bytes(Path(path).read_bytes())
