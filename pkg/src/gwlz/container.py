"""Binary formats: ``.gwlz`` archives (codec payload + enhancer bundle) and
``.gwe`` sidecars (enhancer bundle only, for externally compressed data).

All fields are little-endian.  Layouts::

    .gwlz  "GWLZ" u16 version, u16 flags, 3*u32 dims, f64 reb, f64 e_abs, u8 axis,
           u64 len + payload, [u64 len + enhancer blob if flags & 1],
           f64 psnr_base, f64 psnr_enhanced, u32 crc32(all preceding bytes)
    .gwe   "GWLE" u16 version, 3*u32 dims, u8 axis, f64 e_abs,
           u64 len + enhancer blob, u32 crc32

    enhancer blob
           u32 n_groups, u8 strategy, (n_groups-1)*f64 boundaries,
           per group: f32 in_min, f32 in_max, f32 res_scale, u64 count,
                      u8 model_flag, f32 final_loss,
           u8 channels, u8 kernel, u8 layers,
           per group with model_flag == 1: weight blob (4 * (23*channels + 1) bytes)
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import micro_nn
from .base_codec import CompressedPayload
from .enhancer import EnhancerBundle
from .errors import CorruptionError, DimensionError, FormatError, UnsupportedVersionError
from .grouping import STRATEGIES, GroupSpec, GroupStats

ARCHIVE_MAGIC = b"GWLZ"
SIDECAR_MAGIC = b"GWLE"
VERSION = 1

FLAG_ENHANCER = 1
FLAG_CLAMP = 2

_ARCHIVE_HEAD = struct.Struct("<4sHH3IddB")
_SIDECAR_HEAD = struct.Struct("<4sH3IBd")
_GROUP_REC = struct.Struct("<fffQBf")
_HYPER = struct.Struct("<BBB")


class _Reader:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def unpack(self, st: struct.Struct):
        if self.pos + st.size > self.end:
            raise FormatError("truncated data")
        out = st.unpack_from(self.data, self.pos)
        self.pos += st.size
        return out

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > self.end:
            raise FormatError("truncated data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def section(self) -> bytes:
        (n,) = self.unpack(struct.Struct("<Q"))
        return self.take(n)


def encode_bundle(bundle: EnhancerBundle) -> bytes:
    spec, st = bundle.spec, bundle.stats
    out = bytearray(struct.pack("<IB", spec.n_groups, STRATEGIES.index(spec.strategy)))
    out += struct.pack(f"<{spec.n_groups - 1}d", *spec.boundaries)
    for g in range(spec.n_groups):
        out += _GROUP_REC.pack(
            st.in_min[g], st.in_max[g], st.res_scale[g], int(st.count[g]),
            int(bundle.models[g] is not None), bundle.final_loss[g],
        )
    out += _HYPER.pack(bundle.channels, bundle.kernel, bundle.layers)
    for w in bundle.models:
        if w is not None:
            out += micro_nn.serialize_weights(w)
    return bytes(out)


def decode_bundle(data: bytes) -> EnhancerBundle:
    r = _Reader(data)
    n, strat = r.unpack(struct.Struct("<IB"))
    if n < 1 or strat >= len(STRATEGIES):
        raise FormatError("invalid enhancer blob header")
    bounds = r.unpack(struct.Struct(f"<{n - 1}d"))
    recs = [r.unpack(_GROUP_REC) for _ in range(n)]
    channels, kernel, layers = r.unpack(_HYPER)
    if (kernel, layers) != (micro_nn.KERNEL, micro_nn.LAYERS) or channels < 1:
        raise FormatError(f"unsupported enhancer architecture {channels}/{kernel}/{layers}")
    size = micro_nn.weight_blob_size(channels)
    models = []
    for rec in recs:
        flag = rec[4]
        if flag not in (0, 1):
            raise FormatError(f"invalid model flag {flag}")
        models.append(micro_nn.deserialize_weights(r.take(size), channels) if flag else None)
    if r.pos != r.end:
        raise FormatError("trailing bytes in enhancer blob")
    try:
        spec = GroupSpec(n, tuple(bounds), STRATEGIES[strat])
    except ValueError as exc:
        raise FormatError(f"invalid group spec: {exc}") from None
    stats = GroupStats(
        in_min=np.array([x[0] for x in recs], np.float32),
        in_max=np.array([x[1] for x in recs], np.float32),
        res_scale=np.array([x[2] for x in recs], np.float32),
        count=np.array([x[3] for x in recs], np.int64),
    )
    loss = np.array([x[5] for x in recs], np.float32)
    return EnhancerBundle(spec, stats, models, channels=channels, final_loss=loss)


def weight_bytes(bundle: EnhancerBundle) -> int:
    return bundle.n_models * micro_nn.weight_blob_size(bundle.channels)


@dataclass
class GwlzArchive:
    payload_bytes: bytes
    enhancer_bytes: bytes | None
    psnr_base: float
    psnr_enhanced: float
    axis: int = 0
    flags: int = 0
    version: int = VERSION

    @property
    def payload(self) -> CompressedPayload:
        return CompressedPayload.from_bytes(self.payload_bytes)

    @property
    def bundle(self) -> EnhancerBundle | None:
        return None if self.enhancer_bytes is None else decode_bundle(self.enhancer_bytes)

    @property
    def has_enhancer(self) -> bool:
        return bool(self.flags & FLAG_ENHANCER)

    @property
    def clamp_recommended(self) -> bool:
        return bool(self.flags & FLAG_CLAMP)

    @classmethod
    def build(cls, payload: CompressedPayload, bundle: EnhancerBundle | None,
              quality: tuple[float, float], axis: int = 0,
              clamp_recommended: bool = False) -> "GwlzArchive":
        flags = (FLAG_ENHANCER if bundle is not None else 0) | (FLAG_CLAMP if clamp_recommended else 0)
        return cls(payload.to_bytes(), None if bundle is None else encode_bundle(bundle),
                   float(quality[0]), float(quality[1]), axis, flags)

    def to_bytes(self) -> bytes:
        p = CompressedPayload.from_bytes(self.payload_bytes)
        out = bytearray(_ARCHIVE_HEAD.pack(
            ARCHIVE_MAGIC, self.version, self.flags, *p.dims, p.config.reb,
            p.config.abs_bound, self.axis,
        ))
        out += struct.pack("<Q", len(self.payload_bytes)) + self.payload_bytes
        if self.flags & FLAG_ENHANCER:
            out += struct.pack("<Q", len(self.enhancer_bytes)) + self.enhancer_bytes
        out += struct.pack("<dd", self.psnr_base, self.psnr_enhanced)
        return bytes(out) + struct.pack("<I", zlib.crc32(out))

    @classmethod
    def from_bytes(cls, data: bytes) -> "GwlzArchive":
        data = bytes(data)
        if len(data) < _ARCHIVE_HEAD.size + 4:
            raise FormatError("archive truncated")
        (crc,) = struct.unpack_from("<I", data, len(data) - 4)
        if zlib.crc32(data[:-4]) != crc:
            raise CorruptionError("archive checksum mismatch")
        if data[:4] != ARCHIVE_MAGIC:
            raise FormatError(f"not a .gwlz archive (magic {data[:4]!r})")
        r = _Reader(data, end=len(data) - 4)
        magic, version, flags, d0, d1, d2, reb, e_abs, axis = r.unpack(_ARCHIVE_HEAD)
        if version != VERSION:
            raise UnsupportedVersionError(f"archive version {version} not supported")
        payload_bytes = r.section()
        p = CompressedPayload.from_bytes(payload_bytes)
        if p.dims != (d0, d1, d2) or p.config.reb != reb or p.config.abs_bound != e_abs:
            raise FormatError("archive header disagrees with payload header")
        if axis not in (0, 1, 2):
            raise FormatError(f"invalid axis {axis}")
        enh = r.section() if flags & FLAG_ENHANCER else None
        psnr_base, psnr_enh = r.unpack(struct.Struct("<dd"))
        if r.pos != r.end:
            raise FormatError("trailing bytes in archive")
        if enh is not None:
            decode_bundle(enh)
        return cls(payload_bytes, enh, psnr_base, psnr_enh, axis, flags, version)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.payload.dims

    @property
    def e_abs(self) -> float:
        return self.payload.config.abs_bound


def write_archive(path, payload: CompressedPayload, bundle: EnhancerBundle | None,
                  quality: tuple[float, float], axis: int = 0,
                  clamp_recommended: bool = False) -> int:
    data = GwlzArchive.build(payload, bundle, quality, axis, clamp_recommended).to_bytes()
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def read_archive(path) -> GwlzArchive:
    with open(path, "rb") as fh:
        return GwlzArchive.from_bytes(fh.read())


def overhead_ratio(archive: GwlzArchive) -> float:
    """Enhancer-section bytes over payload-section bytes (length prefixes excluded)."""
    if archive.enhancer_bytes is None:
        return 0.0
    return len(archive.enhancer_bytes) / len(archive.payload_bytes)


@dataclass
class Sidecar:
    dims: tuple[int, int, int]
    axis: int
    e_abs: float
    bundle_bytes: bytes
    version: int = VERSION

    @property
    def bundle(self) -> EnhancerBundle:
        return decode_bundle(self.bundle_bytes)

    def check_dims(self, shape) -> None:
        if tuple(shape) != tuple(self.dims):
            raise DimensionError(f"sidecar was trained for dims {self.dims}, data has {tuple(shape)}")

    def to_bytes(self) -> bytes:
        out = _SIDECAR_HEAD.pack(SIDECAR_MAGIC, self.version, *self.dims, self.axis, self.e_abs)
        out += struct.pack("<Q", len(self.bundle_bytes)) + self.bundle_bytes
        return out + struct.pack("<I", zlib.crc32(out))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Sidecar":
        data = bytes(data)
        if len(data) < _SIDECAR_HEAD.size + 12:
            raise FormatError("sidecar truncated")
        (crc,) = struct.unpack_from("<I", data, len(data) - 4)
        if zlib.crc32(data[:-4]) != crc:
            raise CorruptionError("sidecar checksum mismatch")
        if data[:4] != SIDECAR_MAGIC:
            raise FormatError(f"not a .gwe sidecar (magic {data[:4]!r})")
        r = _Reader(data, end=len(data) - 4)
        _, version, d0, d1, d2, axis, e_abs = r.unpack(_SIDECAR_HEAD)
        if version != VERSION:
            raise UnsupportedVersionError(f"sidecar version {version} not supported")
        blob = r.section()
        if r.pos != r.end:
            raise FormatError("trailing bytes in sidecar")
        decode_bundle(blob)
        return cls((d0, d1, d2), axis, e_abs, blob, version)


def write_sidecar(path, bundle: EnhancerBundle, dims, axis: int, e_abs: float) -> int:
    data = Sidecar(tuple(int(d) for d in dims), axis, float(e_abs), encode_bundle(bundle)).to_bytes()
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def read_sidecar(path) -> Sidecar:
    with open(path, "rb") as fh:
        return Sidecar.from_bytes(fh.read())
