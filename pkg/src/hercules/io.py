"""Binary containers for channel data and volumes, plus slice images.

All integers and floats are little-endian.

``HERCRF01`` (channel data), 64-byte header::

    offset  size  field
    0       8     magic b"HERCRF01"
    8       1     domain (0 encoded channels, 1 decoded elements)
    9       1     sample kind (0 float64, 1 complex128)
    10      2     reserved (zero)
    12      4     dims[0] uint32 (events or rows)
    16      4     dims[1] uint32 (channels or columns)
    20      4     dims[2] uint32 (time samples)
    24      8     fs float64 (Hz)
    32      8     t0 float64 (s)
    40      8     metadata length uint64 (bytes)
    48      16    reserved (zero)

followed by UTF-8 JSON metadata (sorted keys, holds the transmit scheme) and
the samples in C order (time fastest).

``HERCVOL1`` (volumes), 64-byte header::

    offset  size  field
    0       8     magic b"HERCVOL1"
    8       1     value kind (0 complex128, 1 float64 dB)
    9       1     reserved (zero)
    10      6     nx, ny, nz uint16
    16      24    spacing x, y, z float64 (m)
    40      24    origin x, y, z float64 (m)

followed by the voxels with x varying fastest, then y, then z.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .beamform import VolumeGrid
from .schemes import TransmitScheme
from .wavesim import ChannelData, Domain

RF_MAGIC = b"HERCRF01"
VOL_MAGIC = b"HERCVOL1"
HEADER_SIZE = 64
_RF_HEADER = struct.Struct("<8sBBH3Iddq16x")
_VOL_HEADER = struct.Struct("<8sBx3H3d3d")
_DOMAIN_CODE = {Domain.ENCODED: 0, Domain.DECODED: 1}
DISPLAY_RANGE_DB = 60.0


class ContainerError(OSError):
    """Malformed, truncated or foreign container file."""


def _dtype_code(arr: np.ndarray) -> tuple[int, np.dtype]:
    if np.iscomplexobj(arr):
        return 1, np.dtype("<c16")
    return 0, np.dtype("<f8")


def channel_data_bytes(data: ChannelData) -> bytes:
    code, dtype = _dtype_code(data.samples)
    meta = json.dumps({"scheme": data.scheme.to_dict()}, sort_keys=True).encode()
    header = _RF_HEADER.pack(RF_MAGIC, _DOMAIN_CODE[data.domain], code, 0, *data.samples.shape,
                             float(data.fs), float(data.t0), len(meta))
    return header + meta + np.ascontiguousarray(data.samples, dtype=dtype).tobytes()


def write_channel_data(path, data: ChannelData) -> None:
    Path(path).write_bytes(channel_data_bytes(data))


def _read_header(raw: bytes, magic: bytes, layout: struct.Struct, path):
    if len(raw) < HEADER_SIZE:
        raise ContainerError(f"{path}: truncated header ({len(raw)} of {HEADER_SIZE} bytes)")
    fields = layout.unpack_from(raw)
    if fields[0] != magic:
        if fields[0][:4] == magic[:4]:
            raise ContainerError(f"{path}: unsupported container version {fields[0]!r}")
        raise ContainerError(f"{path}: not a {magic.decode()} file (magic {fields[0]!r})")
    return fields


def read_channel_data(path) -> ChannelData:
    raw = Path(path).read_bytes()
    _, domain, code, _, n0, n1, n2, fs, t0, meta_len = _read_header(raw, RF_MAGIC, _RF_HEADER, path)
    if domain not in (0, 1) or code not in (0, 1):
        raise ContainerError(f"{path}: bad domain/sample-kind code ({domain}, {code})")
    dtype = np.dtype("<c16") if code else np.dtype("<f8")
    start = HEADER_SIZE + meta_len
    expected = start + n0 * n1 * n2 * dtype.itemsize
    if len(raw) != expected:
        raise ContainerError(f"{path}: expected {expected} bytes, found {len(raw)} (file truncated or padded)")
    try:
        meta = json.loads(raw[HEADER_SIZE:start].decode())
        scheme = TransmitScheme.from_dict(meta["scheme"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ContainerError(f"{path}: corrupt metadata block ({exc})") from None
    samples = np.frombuffer(raw, dtype=dtype, offset=start).reshape(n0, n1, n2).astype(dtype.newbyteorder("="))
    dom = Domain.DECODED if domain else Domain.ENCODED
    bias = None if dom is Domain.DECODED or not scheme.is_hercules else None
    return ChannelData(samples, fs, t0, scheme, dom, bias)


def volume_bytes(volume: VolumeGrid) -> bytes:
    if volume.values is None:
        raise ContainerError("volume has no values")
    if max(volume.counts) > 0xFFFF:
        raise ContainerError("volume dimensions exceed the uint16 header fields")
    kind = 0 if np.iscomplexobj(volume.values) else 1
    dtype = np.dtype("<c16") if kind == 0 else np.dtype("<f8")
    header = _VOL_HEADER.pack(VOL_MAGIC, kind, *volume.counts, *volume.spacing, *volume.origin)
    return header + np.asarray(volume.values, dtype=dtype).ravel(order="F").tobytes()


def write_volume(path, volume: VolumeGrid) -> None:
    Path(path).write_bytes(volume_bytes(volume))


def read_volume(path) -> VolumeGrid:
    raw = Path(path).read_bytes()
    fields = _read_header(raw, VOL_MAGIC, _VOL_HEADER, path)
    kind, counts, spacing, origin = fields[1], fields[2:5], fields[5:8], fields[8:11]
    if kind not in (0, 1):
        raise ContainerError(f"{path}: bad value kind {kind}")
    dtype = np.dtype("<c16") if kind == 0 else np.dtype("<f8")
    expected = HEADER_SIZE + int(np.prod(counts)) * dtype.itemsize
    if len(raw) != expected:
        raise ContainerError(f"{path}: expected {expected} bytes, found {len(raw)} (file truncated or padded)")
    flat = np.frombuffer(raw, dtype=dtype, offset=HEADER_SIZE).astype(dtype.newbyteorder("="))
    return VolumeGrid(origin, spacing, counts, flat.reshape(counts, order="F"))


def slice_to_gray(db: np.ndarray, display_range: float = DISPLAY_RANGE_DB) -> np.ndarray:
    """Map ``[-display_range, 0]`` dB linearly onto 0..255 (values outside are clipped)."""
    scaled = (np.asarray(db, dtype=float) + display_range) / display_range
    return np.round(np.clip(scaled, 0.0, 1.0) * 255).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Binary (P5) 8-bit portable graymap; ``image[row, col]``, first row at the top."""
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + image.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5" or parts[3] != b"255":
        raise ContainerError(f"{path}: not an 8-bit binary PGM")
    w, h = int(parts[1]), int(parts[2])
    data = parts[4]
    if len(data) != w * h:
        raise ContainerError(f"{path}: pixel data truncated")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def mid_slices(volume_db: VolumeGrid) -> dict:
    """Lateral-axial, elevational-axial and lateral-elevational dB images through the volume maximum.

    Depth runs down the rows of the two axial slices; y runs down the rows of
    the lateral-elevational slice.
    """
    v = volume_db.values
    ix, iy, iz = np.unravel_index(int(np.argmax(v)), v.shape)
    return {
        "lateral_axial": v[:, iy, :].T,
        "elevational_axial": v[ix, :, :].T,
        "lateral_elevational": v[:, :, iz].T,
    }
