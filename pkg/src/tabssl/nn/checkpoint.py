"""Binary checkpoint format for a single network.

Layout (all little-endian)::

    b"TSSL"                      magic
    u16                          format version
    --- payload ---
    u32 input_dim
    u32 n_hidden, u32 * n_hidden hidden widths
    u32 use_batchnorm (0/1)
    u32 activation (0 relu, 1 identity)
    u32 output_dim (0 when absent)
    per parameter array, in canonical order:
        u64 element count, float32 * count
    --- end payload ---
    u64 checksum                 first 8 bytes of blake2b over the payload

Canonical order is layer by layer: weight, bias, gamma, beta, running_mean,
running_var (the last four only for batch-norm blocks).
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from ..errors import SchemaError
from .mlp import MlpSpec, Network, ParamStore

MAGIC = b"TSSL"
VERSION = 1
_ACTIVATION_CODES = {"relu": 0, "identity": 1}
_BN_KEYS = ("gamma", "beta", "running_mean", "running_var")


def checksum64(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def _array_names(spec: MlpSpec) -> list[str]:
    names = []
    for l in range(spec.n_layers):
        names += [f"{l}.weight", f"{l}.bias"]
        if spec.is_block(l) and spec.use_batchnorm:
            names += [f"{l}.{k}" for k in _BN_KEYS]
    return names


def _shapes(spec: MlpSpec) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for l, (fan_in, fan_out) in enumerate(spec.layer_shapes()):
        shapes[f"{l}.weight"] = (fan_out, fan_in)
        shapes[f"{l}.bias"] = (fan_out,)
        for k in _BN_KEYS:
            shapes[f"{l}.{k}"] = (fan_out,)
    return shapes


def encode_payload(net: Network) -> bytes:
    spec = net.spec
    parts = [
        struct.pack("<II", spec.input_dim, len(spec.hidden_dims)),
        struct.pack(f"<{len(spec.hidden_dims)}I", *spec.hidden_dims),
        struct.pack(
            "<III",
            int(spec.use_batchnorm),
            _ACTIVATION_CODES[spec.activation],
            spec.output_dim or 0,
        ),
    ]
    for name in _array_names(spec):
        arr = np.ascontiguousarray(net.params[name], dtype="<f4").reshape(-1)
        parts.append(struct.pack("<Q", arr.size))
        parts.append(arr.tobytes())
    return b"".join(parts)


def network_checksum(net: Network) -> str:
    """Hex checksum of the network as it would be written to disk."""
    return f"{checksum64(encode_payload(net)):016x}"


def dumps(net: Network) -> bytes:
    payload = encode_payload(net)
    return MAGIC + struct.pack("<H", VERSION) + payload + struct.pack("<Q", checksum64(payload))


def loads(blob: bytes) -> Network:
    if len(blob) < 14 or blob[:4] != MAGIC:
        raise SchemaError("not a TSSL checkpoint (bad magic)")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise SchemaError(f"unsupported checkpoint version {version}")
    payload = blob[6:-8]
    (stored,) = struct.unpack_from("<Q", blob, len(blob) - 8)
    if checksum64(payload) != stored:
        raise SchemaError("checkpoint checksum mismatch")

    try:
        off = 0
        input_dim, n_hidden = struct.unpack_from("<II", payload, off)
        off += 8
        hidden = struct.unpack_from(f"<{n_hidden}I", payload, off)
        off += 4 * n_hidden
        use_bn, act_code, output_dim = struct.unpack_from("<III", payload, off)
        off += 12
        activation = {v: k for k, v in _ACTIVATION_CODES.items()}[act_code]
        spec = MlpSpec(input_dim, hidden, bool(use_bn), activation, output_dim or None)
        shapes = _shapes(spec)
        arrays = {}
        for name in _array_names(spec):
            (count,) = struct.unpack_from("<Q", payload, off)
            off += 8
            if count != int(np.prod(shapes[name])):
                raise SchemaError(f"array {name} has {count} values, expected shape {shapes[name]}")
            arr = np.frombuffer(payload, dtype="<f4", count=count, offset=off)
            off += 4 * count
            arrays[name] = arr.astype(np.float64).reshape(shapes[name])
    except (struct.error, KeyError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"malformed checkpoint payload: {exc}") from exc
    if off != len(payload):
        raise SchemaError(f"{len(payload) - off} trailing bytes in checkpoint payload")
    return Network(spec, ParamStore(arrays))


def save(net: Network, path) -> str:
    """Write ``net`` to ``path`` (parents created); returns the hex checksum."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = dumps(net)
    path.write_bytes(blob)
    return f"{struct.unpack_from('<Q', blob, len(blob) - 8)[0]:016x}"


def load(path) -> Network:
    return loads(Path(path).read_bytes())
