"""Compact binary cache for tables, following the checkpoint conventions.

Layout (little-endian): ``b"TSDT"``, u16 version, then the payload
``u64 n_rows, u64 n_features, u8 has_labels``, a length-prefixed UTF-8
JSON header with feature and class names, ``n_rows * n_features`` float64
values, optionally ``n_rows`` int64 labels; finally a u64 blake2b checksum
of the payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import SchemaError
from ..nn.checkpoint import checksum64
from .table import DataTable

MAGIC = b"TSDT"
VERSION = 1


def dumps_table(table: DataTable) -> bytes:
    names = json.dumps(
        {"features": list(table.feature_names),
         "classes": None if table.class_names is None else list(table.class_names)}
    ).encode()
    has_labels = table.labels is not None
    payload = b"".join([
        struct.pack("<QQB", table.n_rows, table.n_features, has_labels),
        struct.pack("<Q", len(names)), names,
        np.ascontiguousarray(table.features, dtype="<f8").tobytes(),
        np.ascontiguousarray(table.labels, dtype="<i8").tobytes() if has_labels else b"",
    ])
    return MAGIC + struct.pack("<H", VERSION) + payload + struct.pack("<Q", checksum64(payload))


def loads_table(blob: bytes) -> DataTable:
    if blob[:4] != MAGIC:
        raise SchemaError("not a TSDT table cache (bad magic)")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise SchemaError(f"unsupported table cache version {version}")
    payload = blob[6:-8]
    if checksum64(payload) != struct.unpack_from("<Q", blob, len(blob) - 8)[0]:
        raise SchemaError("table cache checksum mismatch")
    n, d, has_labels = struct.unpack_from("<QQB", payload, 0)
    off = 17
    (name_len,) = struct.unpack_from("<Q", payload, off)
    off += 8
    names = json.loads(payload[off:off + name_len])
    off += name_len
    x = np.frombuffer(payload, dtype="<f8", count=n * d, offset=off).reshape(n, d)
    off += 8 * n * d
    labels = None
    if has_labels:
        labels = np.frombuffer(payload, dtype="<i8", count=n, offset=off)
    return DataTable(x, names["features"], labels, names["classes"])


def save_table(table: DataTable, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_table(table))


def load_table(path) -> DataTable:
    return loads_table(Path(path).read_bytes())
