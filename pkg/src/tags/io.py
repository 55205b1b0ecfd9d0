"""On-disk volume formats and dataset manifests.

Two formats are supported:

* ``.nii`` / ``.nii.gz`` — single-file NIfTI-1 (raster + affine). A minimal
  reader/writer covering scalar volumes; enough for interchange with common
  medical tooling.
* ``.svol`` — fallback plain format: magic, little-endian JSON header
  (dims, spacing, origin, dtype) followed by raw little-endian scalars.

A dataset manifest is a JSON file: a list of records, each naming the image,
organ-mask and tumor-mask paths (relative to the manifest) plus the organ name.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .volume import MaskVolume, Volume

_NIFTI_DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 64: np.float64}
_NIFTI_CODES = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4, np.dtype(np.int32): 8,
                np.dtype(np.float32): 16, np.dtype(np.float64): 64}

_SVOL_MAGIC = b"SVOL"


class FormatError(ValueError):
    """Unparsable or unsupported volume file."""


def _nifti_header(shape_zyx, spacing_zyx, origin_zyx, dtype) -> bytes:
    """Build a 348-byte NIfTI-1 header. Data is written C-ordered (z,y,x), so
    the fastest axis on disk is x, matching NIfTI's dim[1]=x convention."""
    d, h, w = shape_zyx
    sz, sy, sx = spacing_zyx
    oz, oy, ox = origin_zyx
    code = _NIFTI_CODES.get(np.dtype(dtype))
    if code is None:
        raise FormatError(f"unsupported dtype {dtype}")
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)  # sizeof_hdr
    struct.pack_into("<8h", hdr, 40, 3, w, h, d, 1, 1, 1, 1)  # dim
    struct.pack_into("<h", hdr, 70, code)  # datatype
    struct.pack_into("<h", hdr, 72, np.dtype(dtype).itemsize * 8)  # bitpix
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 0, 0, 0, 0)  # pixdim
    struct.pack_into("<f", hdr, 108, 352.0)  # vox_offset
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    struct.pack_into("<h", hdr, 252, 0)  # qform_code
    struct.pack_into("<h", hdr, 254, 2)  # sform_code
    struct.pack_into("<4f", hdr, 280, sx, 0, 0, ox)  # srow_x
    struct.pack_into("<4f", hdr, 296, 0, sy, 0, oy)  # srow_y
    struct.pack_into("<4f", hdr, 312, 0, 0, sz, oz)  # srow_z
    hdr[344:348] = b"n+1\x00"
    return bytes(hdr)


def _write_nifti(path: Path, data: np.ndarray, spacing, origin) -> None:
    payload = _nifti_header(data.shape, spacing, origin, data.dtype)
    payload += b"\x00\x00\x00\x00"  # extension flag
    payload += np.ascontiguousarray(data).astype(data.dtype).tobytes()
    if path.name.endswith(".gz"):
        with gzip.open(path, "wb") as f:
            f.write(payload)
    else:
        path.write_bytes(payload)


def _read_nifti(path: Path) -> tuple[np.ndarray, tuple, tuple]:
    opener = gzip.open if path.name.endswith(".gz") else open
    with opener(path, "rb") as f:  # type: ignore[operator]
        raw = f.read()
    if len(raw) < 352:
        raise FormatError(f"{path}: truncated NIfTI file")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != 348 or raw[344:347] not in (b"n+1", b"ni1"):
        raise FormatError(f"{path}: not a NIfTI-1 file")
    dim = struct.unpack_from("<8h", raw, 40)
    ndim = dim[0]
    if ndim < 3 or any(d > 1 for d in dim[4 : 1 + ndim]):
        raise FormatError(f"{path}: only scalar 3D volumes supported (dim={dim})")
    w, h, d = dim[1], dim[2], dim[3]
    (datatype,) = struct.unpack_from("<h", raw, 70)
    dtype = _NIFTI_DTYPES.get(datatype)
    if dtype is None:
        raise FormatError(f"{path}: unsupported NIfTI datatype {datatype}")
    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    srow_x = struct.unpack_from("<4f", raw, 280)
    srow_y = struct.unpack_from("<4f", raw, 296)
    srow_z = struct.unpack_from("<4f", raw, 312)
    n = d * h * w
    start = int(vox_offset)
    buf = raw[start : start + n * np.dtype(dtype).itemsize]
    if len(buf) != n * np.dtype(dtype).itemsize:
        raise FormatError(f"{path}: truncated voxel data")
    data = np.frombuffer(buf, dtype=np.dtype(dtype).newbyteorder("<")).reshape(d, h, w)
    spacing = (float(pixdim[3]) or 1.0, float(pixdim[2]) or 1.0, float(pixdim[1]) or 1.0)
    origin = (float(srow_z[3]), float(srow_y[3]), float(srow_x[3]))
    return np.array(data), spacing, origin


def _write_svol(path: Path, data: np.ndarray, spacing, origin) -> None:
    header = json.dumps(
        {
            "shape": list(data.shape),
            "spacing": list(spacing),
            "origin": list(origin),
            "dtype": data.dtype.name,
        }
    ).encode()
    with open(path, "wb") as f:
        f.write(_SVOL_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(np.ascontiguousarray(data).astype(data.dtype.newbyteorder("<")).tobytes())


def _read_svol(path: Path) -> tuple[np.ndarray, tuple, tuple]:
    raw = path.read_bytes()
    if raw[:4] != _SVOL_MAGIC:
        raise FormatError(f"{path}: bad magic")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    try:
        header = json.loads(raw[8 : 8 + hlen])
    except (ValueError, UnicodeDecodeError) as e:
        raise FormatError(f"{path}: bad header: {e}") from e
    shape = tuple(header["shape"])
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    n = int(np.prod(shape)) * dtype.itemsize
    buf = raw[8 + hlen : 8 + hlen + n]
    if len(buf) != n:
        raise FormatError(f"{path}: truncated voxel data")
    data = np.frombuffer(buf, dtype=dtype).reshape(shape)
    return np.array(data), tuple(header["spacing"]), tuple(header.get("origin", (0, 0, 0)))


def save_volume(path, v: Volume | MaskVolume) -> None:
    path = Path(path)
    data = v.data
    if isinstance(v, MaskVolume):
        data = data.astype(np.uint8)
    elif data.dtype not in (np.float32, np.float64):
        data = data.astype(np.float32)
    if path.name.endswith((".nii", ".nii.gz")):
        _write_nifti(path, data, v.spacing, v.origin)
    elif path.suffix == ".svol":
        _write_svol(path, data, v.spacing, v.origin)
    else:
        raise FormatError(f"unknown volume extension: {path.name}")


def load_volume(path, mask: bool = False) -> Volume | MaskVolume:
    path = Path(path)
    if path.name.endswith((".nii", ".nii.gz")):
        data, spacing, origin = _read_nifti(path)
    elif path.suffix == ".svol":
        data, spacing, origin = _read_svol(path)
    else:
        raise FormatError(f"unknown volume extension: {path.name}")
    cls = MaskVolume if mask else Volume
    return cls(data, spacing=spacing, origin=origin)


def load_volume_bytes(payload: bytes, filename: str, mask: bool = False):
    """Parse an uploaded file from memory by writing to a temp path-free route."""
    import io as _io
    import tempfile

    suffix = ".nii.gz" if filename.endswith(".nii.gz") else Path(filename).suffix
    with tempfile.NamedTemporaryFile(suffix=suffix) as tmp:
        tmp.write(payload)
        tmp.flush()
        return load_volume(tmp.name, mask=mask)


@dataclass
class CaseRecord:
    image: str
    organ: str
    tumor: str | None
    organ_name: str = "organ"


def save_manifest(path, cases: list[CaseRecord]) -> None:
    records = [
        {"image": c.image, "organ": c.organ, "tumor": c.tumor, "organ_name": c.organ_name}
        for c in cases
    ]
    Path(path).write_text(json.dumps(records, indent=2))


def load_manifest(path) -> list[CaseRecord]:
    path = Path(path)
    records = json.loads(path.read_text())
    if not isinstance(records, list):
        raise FormatError(f"{path}: manifest must be a JSON list")
    return [
        CaseRecord(
            image=r["image"],
            organ=r["organ"],
            tumor=r.get("tumor"),
            organ_name=r.get("organ_name", "organ"),
        )
        for r in records
    ]


def resolve_case_paths(manifest_path, case: CaseRecord) -> dict:
    base = Path(manifest_path).parent
    out = {"image": base / case.image, "organ": base / case.organ}
    out["tumor"] = base / case.tumor if case.tumor else None
    return out


__all__ = [
    "FormatError",
    "CaseRecord",
    "save_volume",
    "load_volume",
    "load_volume_bytes",
    "save_manifest",
    "load_manifest",
    "resolve_case_paths",
]
