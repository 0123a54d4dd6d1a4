"""Binary container shared by checkpoints and Fisher files.

Layout: magic ``EWCG``, u16 format version, u32 section count, then per
section a 4-byte ASCII tag, u64 payload length and the payload. The ``META``
section is canonical JSON; every other section is a little-endian float64
vector.
"""
import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Union

import numpy as np

from ..errors import InputError

MAGIC = b"EWCG"
FORMAT_VERSION = 1
META_TAG = "META"

_HEADER = struct.Struct("<4sHI")
_SECTION = struct.Struct("<4sQ")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def pack(meta: dict[str, Any], arrays: dict[str, np.ndarray]) -> bytes:
    sections = [(META_TAG, canonical_json(meta).encode("utf-8"))]
    for tag, array in arrays.items():
        if len(tag) != 4 or tag == META_TAG:
            raise InputError(f"invalid section tag {tag!r}")
        sections.append((tag, np.ascontiguousarray(array, dtype="<f8").reshape(-1).tobytes()))
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(sections))]
    for tag, payload in sections:
        chunks.append(_SECTION.pack(tag.encode("ascii"), len(payload)))
        chunks.append(payload)
    return b"".join(chunks)


def unpack(blob: bytes) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    if len(blob) < _HEADER.size:
        raise InputError("file too short to be an ewcgan container")
    magic, version, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise InputError("not an ewcgan container (bad magic)")
    if version != FORMAT_VERSION:
        raise InputError(f"unsupported container version {version}")
    pos = _HEADER.size
    meta: dict[str, Any] = {}
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        tag_bytes, length = _SECTION.unpack_from(blob, pos)
        pos += _SECTION.size
        payload = blob[pos:pos + length]
        if len(payload) != length:
            raise InputError("truncated container section")
        pos += length
        tag = tag_bytes.decode("ascii")
        if tag == META_TAG:
            meta = json.loads(payload.decode("utf-8"))
        else:
            arrays[tag] = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return meta, arrays


def write_container(path: Union[str, Path], meta: dict[str, Any], arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(pack(meta, arrays))
    tmp.replace(path)
    return path


def read_container(path: Union[str, Path]) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Container not found: {path}")
    return unpack(path.read_bytes())


def file_digest(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def digest_of(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
