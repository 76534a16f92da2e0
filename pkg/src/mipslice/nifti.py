"""Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer.

Covers the subset needed here: axis-aligned scalar volumes with voxel
spacing taken from ``pixdim``. Orientation handling is limited to the
fixed x-fastest disk layout; arbitrary affines are out of scope.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, MetadataError

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"

# NIfTI-1 datatype code -> numpy dtype
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def read_nifti(path):
    """Read a NIfTI-1 file.

    Returns (data, spacing) where data is a 3D array indexed [z, y, x]
    and spacing is (sx, sy, sz) in mm.
    """
    with _open(path, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: truncated NIfTI header")

    sizeof_hdr = struct.unpack_from("<i", raw, 0)[0]
    if sizeof_hdr == 348:
        bo = "<"
    elif struct.unpack_from(">i", raw, 0)[0] == 348:
        bo = ">"
    else:
        raise FormatError(f"{path}: not a NIfTI-1 file (bad sizeof_hdr)")

    magic = raw[344:348]
    if magic not in (MAGIC_SINGLE, b"ni1\x00"):
        raise FormatError(f"{path}: bad NIfTI magic {magic!r}")

    dim = struct.unpack_from(bo + "8h", raw, 40)
    ndim = dim[0]
    if ndim != 3:
        raise FormatError(f"{path}: expected rank-3 volume, header says rank {ndim}")
    nx, ny, nz = dim[1], dim[2], dim[3]

    datatype = struct.unpack_from(bo + "h", raw, 70)[0]
    if datatype not in _DTYPES:
        raise FormatError(f"{path}: unsupported NIfTI datatype code {datatype}")
    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(bo)

    pixdim = struct.unpack_from(bo + "8f", raw, 76)
    sx, sy, sz = pixdim[1], pixdim[2], pixdim[3]

    vox_offset = int(struct.unpack_from(bo + "f", raw, 108)[0])
    scl_slope = struct.unpack_from(bo + "f", raw, 112)[0]
    scl_inter = struct.unpack_from(bo + "f", raw, 116)[0]

    count = nx * ny * nz
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=vox_offset)
    if data.size != count:
        raise FormatError(f"{path}: data section shorter than header dims")
    # disk layout is x-fastest; C-order reshape to (z, y, x) matches it
    data = data.reshape((nz, ny, nx)).astype(np.float32)
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        data = data * slope + scl_inter
    return data, (float(sx), float(sy), float(sz))


def write_nifti(path, data, spacing):
    """Write a 3D array indexed [z, y, x] with spacing (sx, sy, sz)."""
    data = np.asarray(data)
    if data.ndim != 3:
        raise FormatError(f"expected rank-3 data, got rank {data.ndim}")
    sx, sy, sz = spacing
    if min(sx, sy, sz) <= 0:
        raise MetadataError(f"non-positive spacing {spacing}")
    nz, ny, nx = data.shape

    out = data.astype(np.float32)
    dtype_code = _DTYPE_CODES[np.dtype(np.float32)]
    bitpix = 32

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, dtype_code)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, float(HEADER_SIZE + 4))
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    struct.pack_into("<h", hdr, 254, 1)  # sform_code = scanner
    struct.pack_into("<4f", hdr, 280, sx, 0, 0, 0)
    struct.pack_into("<4f", hdr, 296, 0, sy, 0, 0)
    struct.pack_into("<4f", hdr, 312, 0, 0, sz, 0)
    hdr[344:348] = MAGIC_SINGLE

    with _open(path, "wb") as f:
        f.write(bytes(hdr))
        f.write(b"\x00\x00\x00\x00")  # extension flag
        f.write(out.tobytes(order="C"))
