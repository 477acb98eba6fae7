"""Binary model files.

Layout (little-endian): ``b"ECGN"``, u32 format version, u32 descriptor
length, UTF-8 JSON descriptor, u64 blob length, float64 parameter blob,
u32 CRC32 of everything before it.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .layers import LAYER_TYPES, Layer, Residual
from .model import Model

MAGIC = b"ECGN"
FORMAT_VERSION = 1


def _describe(layer: Layer) -> dict:
    if isinstance(layer, Residual):
        return {
            "kind": layer.kind,
            "body": [_describe(b) for b in layer.body],
            "skip": None if layer.skip is None else _describe(layer.skip),
        }
    return {"kind": layer.kind, "config": layer.config()}


def _rebuild(desc: dict) -> Layer:
    kind = desc.get("kind")
    if kind == Residual.kind:
        skip = desc.get("skip")
        return Residual([_rebuild(b) for b in desc["body"]], None if skip is None else _rebuild(skip))
    if kind not in LAYER_TYPES:
        raise FormatError(f"unknown layer kind {kind!r}")
    return LAYER_TYPES[kind](**desc.get("config", {}))


def _arrays(model: Model) -> list[tuple[str, Layer, str, str]]:
    out = [(name, layer, key, "params") for name, layer, key in model.parameters()]
    out += [(name, layer, key, "buffers") for name, layer, key in model.buffers()]
    return out


def serialize_model(model: Model) -> bytes:
    arrays = _arrays(model)
    desc = {
        "name": model.name,
        "in_leads": model.in_leads,
        "num_classes": model.num_classes,
        "classes": list(model.classes),
        "layers": [_describe(layer) for layer in model.layers],
        "arrays": [[name, list(getattr(layer, store)[key].shape)] for name, layer, key, store in arrays],
    }
    head = json.dumps(desc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(getattr(layer, store)[key], dtype="<f8").tobytes()
                    for _, layer, key, store in arrays)
    body = MAGIC + struct.pack("<II", FORMAT_VERSION, len(head)) + head + struct.pack("<Q", len(blob)) + blob
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize_model(data: bytes) -> Model:
    if len(data) < 20 or data[:4] != MAGIC:
        raise FormatError("not an ECGN model file")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch (file truncated or corrupted)")
    version, head_len = struct.unpack("<II", body[4:12])
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {version}")
    pos = 12 + head_len
    try:
        desc = json.loads(body[12:pos].decode("utf-8"))
        (blob_len,) = struct.unpack("<Q", body[pos:pos + 8])
    except (ValueError, struct.error) as exc:
        raise FormatError(f"corrupt descriptor: {exc}") from exc
    blob = body[pos + 8:]
    if len(blob) != blob_len:
        raise FormatError("parameter blob length mismatch")
    try:
        model = Model([_rebuild(d) for d in desc["layers"]], desc["in_leads"], desc["num_classes"], desc["name"],
                      desc.get("classes"))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"corrupt layer graph: {exc}") from exc
    arrays = _arrays(model)
    if [a[0] for a in arrays] != [a[0] for a in desc["arrays"]]:
        raise FormatError("parameter names do not match the layer graph")
    values = np.frombuffer(blob, dtype="<f8")
    offset = 0
    for (name, layer, key, store), (_, shape) in zip(arrays, desc["arrays"]):
        size = int(np.prod(shape))
        if tuple(getattr(layer, store)[key].shape) != tuple(shape) or offset + size > len(values):
            raise FormatError(f"shape mismatch for {name}")
        getattr(layer, store)[key] = values[offset:offset + size].reshape(shape).astype(np.float64)
        offset += size
    if offset != len(values):
        raise FormatError("trailing parameter data")
    return model


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_bytes(serialize_model(model))


def load_model(path: str | Path) -> Model:
    return deserialize_model(Path(path).read_bytes())
