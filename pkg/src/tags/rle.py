"""Run-length encoding of binary masks over flattened z-major (C) order.

Wire format: {"size": total voxels, "counts": [...]} where counts alternate
runs of zeros and ones, starting with zeros (a leading one-run is encoded as
a zero-length zero-run).
"""

from __future__ import annotations

import numpy as np


def rle_encode(mask: np.ndarray) -> dict:
    flat = np.asarray(mask).ravel().astype(bool)
    size = int(flat.size)
    if size == 0:
        return {"size": 0, "counts": []}
    changes = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], changes, [size]])
    runs = np.diff(bounds).tolist()
    counts = [int(r) for r in runs]
    if flat[0]:
        counts = [0] + counts
    return {"size": size, "counts": counts}


def rle_decode(rle: dict, shape=None) -> np.ndarray:
    size = int(rle["size"])
    counts = rle["counts"]
    if sum(counts) != size:
        raise ValueError(f"counts sum {sum(counts)} != size {size}")
    out = np.zeros(size, dtype=np.uint8)
    pos = 0
    val = 0
    for c in counts:
        if val:
            out[pos : pos + c] = 1
        pos += c
        val ^= 1
    if shape is not None:
        expected = int(np.prod(shape))
        if expected != size:
            raise ValueError(f"shape {shape} holds {expected} voxels, rle has {size}")
        out = out.reshape(shape)
    return out


__all__ = ["rle_encode", "rle_decode"]
