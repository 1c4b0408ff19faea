"""Bit-exact readers and writers for the on-disk formats.

* LAS 1.2, uncompressed, point data record formats 0 and 1 (little endian,
  227-byte public header).
* Whitespace separated text clouds: ``x y z i`` or ``x y z i nir r g``.
* Binary PPM (P6, maxval 255) plus a six-line world file.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .cloud import GeoRaster, PointCloud
from .errors import (LasRangeError, LasSignatureError, LasTruncatedError, LasVersionError,
                     RasterFormatError, TextCloudError)

LAS_HEADER_SIZE = 227
LAS_SCALE = 0.001

# public header block, LAS 1.2
_HEADER = struct.Struct("<4sHHIHH8sBB32s32sHHHIIBHI5I3d3d6d")
assert _HEADER.size == LAS_HEADER_SIZE

_RECORD_LENGTH = {0: 20, 1: 28}
_POINT0 = np.dtype([("x", "<i4"), ("y", "<i4"), ("z", "<i4"), ("intensity", "<u2"),
                    ("flags", "u1"), ("classification", "u1"), ("scan_angle", "i1"),
                    ("user_data", "u1"), ("source_id", "<u2")])

_INT32_MIN, _INT32_MAX = -(2 ** 31), 2 ** 31 - 1


def read_las(data: bytes) -> PointCloud:
    """Decode an uncompressed LAS 1.2 file (point formats 0/1)."""
    data = bytes(data)
    if len(data) < 4 or data[:4] != b"LASF":
        raise LasSignatureError("byte 0: missing 'LASF' file signature")
    if len(data) < LAS_HEADER_SIZE:
        raise LasTruncatedError(f"byte {len(data)}: header truncated, need {LAS_HEADER_SIZE} bytes")
    h = _HEADER.unpack_from(data, 0)
    major, minor = h[7], h[8]
    if (major, minor) != (1, 2):
        raise LasVersionError(f"byte 24: unsupported LAS version {major}.{minor}, need 1.2")
    header_size, point_offset = h[13], h[14]
    fmt, record_len, count = h[16], h[17], h[18]
    if fmt not in _RECORD_LENGTH:
        raise LasVersionError(f"byte 104: unsupported point data record format {fmt}")
    if record_len < _RECORD_LENGTH[fmt]:
        raise LasVersionError(f"byte 105: record length {record_len} too short for format {fmt}")
    if header_size < LAS_HEADER_SIZE or point_offset < header_size:
        raise LasTruncatedError(f"byte 94: inconsistent header size {header_size} / point offset {point_offset}")
    scale = np.array(h[24:27])
    offset = np.array(h[27:30])

    end = point_offset + count * record_len
    if len(data) < end:
        complete = max(0, (len(data) - point_offset) // record_len)
        raise LasTruncatedError(
            f"byte {point_offset + complete * record_len}: point records truncated after "
            f"{complete} of {count} records")
    dtype = np.dtype({"names": _POINT0.names,
                      "formats": [_POINT0.fields[n][0] for n in _POINT0.names],
                      "offsets": [_POINT0.fields[n][1] for n in _POINT0.names],
                      "itemsize": record_len})
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=point_offset)
    raw = np.column_stack([rec["x"], rec["y"], rec["z"]]).astype(np.float64)
    xyz = raw * scale + offset
    return PointCloud(xyz, rec["intensity"].astype(np.float64))


def write_las(cloud: PointCloud) -> bytes:
    """Encode ``cloud`` as LAS 1.2 point format 0.

    Scale is 0.001 on every axis and the offsets are the floor of the bounds
    minimum, so any cloud spanning less than ~2147 km fits the int32 records.
    Only x, y, z and intensity are stored; intensity is rounded to uint16.
    """
    n = len(cloud)
    if n:
        lo, hi = cloud.bounds
        offset = np.floor(lo)
    else:
        lo = hi = offset = np.zeros(3)
    scaled = np.round((cloud.xyz - offset) / LAS_SCALE)
    if n and (scaled.min() < _INT32_MIN or scaled.max() > _INT32_MAX):
        raise LasRangeError("coordinate span exceeds the 32-bit range at scale 0.001")
    intensity = np.round(cloud.intensity)
    if n and (intensity.min() < 0 or intensity.max() > 65535):
        raise LasRangeError("intensity outside the uint16 range")

    rec = np.zeros(n, dtype=_POINT0)
    rec["x"], rec["y"], rec["z"] = scaled[:, 0], scaled[:, 1], scaled[:, 2]
    rec["intensity"] = intensity
    rec["flags"] = 1 | (1 << 3)  # return 1 of 1

    by_return = (n, 0, 0, 0, 0)
    header = _HEADER.pack(
        b"LASF", 0, 0, 0, 0, 0, b"\0" * 8, 1, 2,
        b"treedecay".ljust(32, b"\0"), b"treedecay".ljust(32, b"\0"),
        0, 0, LAS_HEADER_SIZE, LAS_HEADER_SIZE, 0, 0, _RECORD_LENGTH[0], n, *by_return,
        LAS_SCALE, LAS_SCALE, LAS_SCALE, *offset,
        hi[0], lo[0], hi[1], lo[1], hi[2], lo[2],
    )
    return header + rec.tobytes()


def las_point_block(data: bytes) -> bytes:
    """Raw point-record bytes of a LAS file (header and VLRs stripped)."""
    h = _HEADER.unpack_from(data, 0)
    start = h[14]
    return bytes(data[start:start + h[17] * h[18]])


# -- text clouds --------------------------------------------------------------

def read_text_cloud(text: str) -> PointCloud:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (4, 7):
            raise TextCloudError(f"expected 4 or 7 fields, got {len(fields)}", lineno)
        try:
            values = [float(f) for f in fields]
        except ValueError:
            bad = next(f for f in fields if not _is_number(f))
            raise TextCloudError(f"non-numeric token {bad!r}", lineno) from None
        if len(values) == 4:
            values += [0.0, 0.0, 0.0]
        if not all(math.isfinite(v) for v in values):
            raise TextCloudError("non-finite value", lineno)
        rows.append(values)
    arr = np.array(rows, dtype=np.float64).reshape(-1, 7)
    return PointCloud(arr[:, :3], arr[:, 3], arr[:, 4:])


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def write_text_cloud(cloud: PointCloud) -> str:
    """Seven fields per point, six decimals."""
    arr = cloud.as_array()
    if not len(arr):
        return ""
    fmt = " ".join(["%.6f"] * 7)
    return "\n".join(fmt % tuple(row) for row in arr.tolist()) + "\n"


# -- PPM + world file -----------------------------------------------------------

def _ppm_header(data: bytes):
    """Parse a P6 header; returns (width, height, maxval, data offset)."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise RasterFormatError("truncated PPM header")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos:pos + 1].isspace():
        raise RasterFormatError("truncated PPM header")
    magic = tokens[0]
    if magic != b"P6":
        raise RasterFormatError(f"unsupported PPM magic {magic!r}, need P6")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise RasterFormatError("non-integer PPM header field") from None
    if width <= 0 or height <= 0:
        raise RasterFormatError("PPM dimensions must be positive")
    return width, height, maxval, pos + 1


def read_ppm(data: bytes) -> np.ndarray:
    """Decode binary P6 into a (height, width, 3) uint8 array."""
    data = bytes(data)
    if data[:2] != b"P6":
        raise RasterFormatError(f"unsupported PPM magic {data[:2]!r}, need P6")
    width, height, maxval, offset = _ppm_header(data)
    if maxval != 255:
        raise RasterFormatError(f"PPM maxval {maxval} unsupported, need 255")
    need = width * height * 3
    if len(data) - offset < need:
        raise RasterFormatError(
            f"PPM pixel data truncated: {len(data) - offset} of {need} bytes")
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=offset).reshape(height, width, 3)


def write_ppm(pixels) -> bytes:
    """Encode (height, width, 3) uint8 pixels as P6."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError("pixels must be a (height, width, 3) uint8 array")
    h, w, _ = pixels.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(pixels).tobytes()


def read_world_file(text: str) -> tuple:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) != 6:
        raise RasterFormatError(f"world file must have 6 lines, got {len(lines)}")
    try:
        return tuple(float(v) for v in lines)
    except ValueError:
        raise RasterFormatError("non-numeric world file coefficient") from None


def write_world_file(transform) -> str:
    return "".join(f"{float(v)!r}\n" for v in transform)


def read_geo_raster(ppm_bytes: bytes, world_file_text: str) -> GeoRaster:
    """PPM red/green/blue bytes become the nir/r/g planes."""
    pixels = read_ppm(ppm_bytes)
    transform = read_world_file(world_file_text)
    try:
        return GeoRaster(np.moveaxis(pixels, 2, 0), transform)
    except ValueError as exc:
        raise RasterFormatError(str(exc)) from None


def write_geo_raster(raster: GeoRaster) -> tuple[bytes, str]:
    return write_ppm(np.moveaxis(raster.planes, 0, 2)), write_world_file(raster.transform)
