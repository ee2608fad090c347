"""Checkpoint file format.

Layout: 8-byte magic ``ESGCNCP1``; little-endian uint32 length + UTF-8 JSON
header (config echo, epoch, validation MAE, parameter shapes); then one
blob per parameter in sorted name order, each as uint32 name length, the
UTF-8 name, uint32 float count, and the values as little-endian float32.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ESGCNCP1"


class CheckpointError(RuntimeError):
    """Corrupt or unreadable checkpoint artifact."""


def save(path: str, params: dict[str, np.ndarray], config: dict,
         epoch: int, val_mae: float) -> None:
    header = {
        "config": config,
        "epoch": epoch,
        "val_mae": val_mae,
        "param_shapes": {name: list(arr.shape) for name, arr in sorted(params.items())},
    }
    payload = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.size))
            fh.write(arr.tobytes())


def load(path: str) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    if len(blob) < len(MAGIC) + 4 or blob[:8] != MAGIC:
        raise CheckpointError(f"corrupt checkpoint {path}: bad magic {blob[:8]!r}")
    (hlen,) = struct.unpack_from("<I", blob, 8)
    offset = 12 + hlen
    try:
        header = json.loads(blob[12:offset].decode("utf-8"))
        shapes = header["param_shapes"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: bad header ({exc})") from None

    params: dict[str, np.ndarray] = {}
    try:
        while offset < len(blob):
            (nlen,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + nlen].decode("utf-8")
            offset += nlen
            (count,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
            params[name] = arr.reshape(shapes[name]).astype(np.float32)
    except (struct.error, KeyError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: bad parameter blob ({exc})") from None
    if set(params) != set(shapes):
        raise CheckpointError(f"corrupt checkpoint {path}: parameter list does not match header")
    return params, header
