"""AVSF feature-tensor container.

Layout (all integers little-endian u32)::

    b"AVSF" | version | channels | frames | bands | json_len | json | float32 data

The JSON block holds the channel-semantics tags and free metadata and is
written with sorted keys so identical tensors give identical bytes. Data is
row-major ``(channels, frames, bands)`` little-endian float32.
"""

import json
import struct

import numpy as np

from .features import FeatureTensor

MAGIC = b"AVSF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


class AvsfError(ValueError):
    pass


def to_bytes(tensor):
    data = np.ascontiguousarray(tensor.data, dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise AvsfError("feature tensor contains non-finite values")
    block = json.dumps(
        {"channels": list(tensor.channels), "meta": tensor.meta},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    c, t, m = data.shape
    return _HEADER.pack(MAGIC, VERSION, c, t, m, len(block)) + block + data.tobytes()


def from_bytes(buf):
    if len(buf) < _HEADER.size:
        raise AvsfError("truncated AVSF header")
    magic, version, c, t, m, n_json = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise AvsfError(f"bad magic {magic!r}")
    if version != VERSION:
        raise AvsfError(f"unsupported AVSF version {version}")
    start = _HEADER.size + n_json
    expected = start + 4 * c * t * m
    if len(buf) != expected:
        raise AvsfError(f"AVSF payload is {len(buf)} bytes, expected {expected}")
    block = json.loads(buf[_HEADER.size : start].decode("utf-8"))
    data = np.frombuffer(buf, dtype="<f4", offset=start).reshape(c, t, m).astype(np.float32)
    return FeatureTensor(data, tuple(block["channels"]), block.get("meta", {}))


def write_avsf(path, tensor):
    with open(path, "wb") as fh:
        fh.write(to_bytes(tensor))


def read_avsf(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def embeddings_to_tensor(batch, role="embedding"):
    """Pack an ``(N, K, D)`` embedding batch as a 1 x (N*K) x D tensor."""
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, np.newaxis, :]
    n, k, d = arr.shape
    return FeatureTensor(arr.reshape(1, n * k, d), (role,), {"clips": n, "crops": k})


def tensor_to_embeddings(tensor):
    n = tensor.meta.get("clips")
    k = tensor.meta.get("crops", 1)
    flat = np.asarray(tensor.data, dtype=np.float64)[0]
    if n is None:
        n = flat.shape[0] // k
    return flat.reshape(n, k, flat.shape[1])
