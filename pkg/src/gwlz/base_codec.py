"""Reference error-bounded lossy codec: 3D Lorenzo prediction, linear-scaling
quantization, canonical Huffman coding and a zlib pass over the code stream.

Compression returns the decompressed volume alongside the payload because the
enhancer is trained on it.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _huffman
from .errors import ConfigError, CorruptionError, DataError, FormatError, UnsupportedVersionError
from .volume_io import as_volume, check_dims, check_finite, vrange

MAGIC = b"GWLP"
VERSION = 1
PREDICTOR_IDS = {"lorenzo3d": 0}
DEFAULT_MAX_QUANT_CODE = 2**15 - 1

_HEAD = struct.Struct("<4sHBIdd3IQ")
_OUTLIER = np.dtype([("index", "<u8"), ("value", "<f4")])


def abs_bound_from_reb(reb: float, value_range: float) -> float:
    return reb * value_range


@dataclass(frozen=True)
class CodecConfig:
    reb: float
    abs_bound: float
    predictor: str = "lorenzo3d"
    max_quant_code: int = DEFAULT_MAX_QUANT_CODE

    def __post_init__(self):
        if not self.reb > 0:
            raise ConfigError(f"relative error bound must be > 0, got {self.reb}")
        if not self.abs_bound > 0 or not np.isfinite(self.abs_bound):
            raise ConfigError(f"absolute error bound must be finite and > 0, got {self.abs_bound}")
        if self.predictor not in PREDICTOR_IDS:
            raise ConfigError(f"unknown predictor {self.predictor!r}")
        if not 1 <= self.max_quant_code < 2**32:
            raise ConfigError("max_quant_code must be in [1, 2^32)")

    @classmethod
    def for_volume(cls, vol: np.ndarray, reb: float, **kw) -> "CodecConfig":
        """Derive the absolute bound from ``reb`` and the volume's value range.

        A constant volume has zero range; its bound falls back to ``reb`` in
        data units so the codec still runs (reconstruction is exact anyway).
        """
        e = abs_bound_from_reb(reb, vrange(vol))
        if e == 0.0:
            e = float(reb)
        return cls(reb=float(reb), abs_bound=float(e), **kw)


@dataclass
class CompressedPayload:
    config: CodecConfig
    dims: tuple[int, int, int]
    code_stream: bytes
    outlier_index: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint64))
    outlier_value: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float32))

    def to_bytes(self) -> bytes:
        cfg = self.config
        head = _HEAD.pack(
            MAGIC, VERSION, PREDICTOR_IDS[cfg.predictor], cfg.max_quant_code,
            cfg.reb, cfg.abs_bound, *self.dims, len(self.outlier_index),
        )
        rec = np.empty(len(self.outlier_index), dtype=_OUTLIER)
        rec["index"] = self.outlier_index
        rec["value"] = self.outlier_value
        body = head + rec.tobytes() + struct.pack("<Q", len(self.code_stream)) + self.code_stream
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedPayload":
        data = bytes(data)
        if len(data) < _HEAD.size + 12:
            raise FormatError("payload truncated")
        (crc,) = struct.unpack_from("<I", data, len(data) - 4)
        if zlib.crc32(data[:-4]) != crc:
            raise CorruptionError("payload checksum mismatch")
        magic, version, pred, maxq, reb, e, d0, d1, d2, nout = _HEAD.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatError(f"bad payload magic {magic!r}")
        if version != VERSION:
            raise UnsupportedVersionError(f"payload version {version} not supported")
        names = {v: k for k, v in PREDICTOR_IDS.items()}
        if pred not in names:
            raise FormatError(f"unknown predictor id {pred}")
        pos = _HEAD.size
        end = pos + nout * _OUTLIER.itemsize
        if end + 8 > len(data) - 4:
            raise FormatError("payload truncated in outlier section")
        rec = np.frombuffer(data[pos:end], dtype=_OUTLIER)
        (clen,) = struct.unpack_from("<Q", data, end)
        pos = end + 8
        if pos + clen != len(data) - 4:
            raise FormatError("code stream length inconsistent with payload size")
        try:
            cfg = CodecConfig(reb=reb, abs_bound=e, predictor=names[pred], max_quant_code=maxq)
            dims = check_dims((d0, d1, d2))
        except ConfigError as exc:
            raise FormatError(f"invalid payload header: {exc}") from None
        idx = rec["index"].astype(np.uint64)
        if idx.size and (np.any(np.diff(idx.astype(np.int64)) <= 0) or int(idx[-1]) >= int(np.prod(dims))):
            raise FormatError("outlier indices not strictly increasing / in range")
        return cls(cfg, dims, data[pos:pos + clen], idx, rec["value"].astype(np.float32))


@numba.njit(cache=True)
def _lorenzo_encode(x, e, maxq):
    n0, n1, n2 = x.shape
    rec = np.empty((n0, n1, n2), dtype=np.float32)
    codes = np.zeros(n0 * n1 * n2, dtype=np.int64)
    outlier = np.zeros(n0 * n1 * n2, dtype=np.bool_)
    bw = 2.0 * e
    flat = 0
    for i in range(n0):
        for j in range(n1):
            for k in range(n2):
                pred = _predict(rec, i, j, k)
                xv = np.float64(x[i, j, k])
                v = (xv - pred) / bw
                av = abs(v)
                ok = av <= maxq + 0.5
                if ok:
                    q = np.floor(av + 0.5)
                    if q > maxq:
                        ok = False
                    else:
                        if v < 0:
                            q = -q
                        xr = np.float32(pred + bw * q)
                        if abs(xv - np.float64(xr)) > e:
                            ok = False
                if ok:
                    rec[i, j, k] = xr
                    codes[flat] = np.int64(q)
                else:
                    rec[i, j, k] = x[i, j, k]
                    outlier[flat] = True
                flat += 1
    return codes, outlier, rec


@numba.njit(cache=True)
def _predict(r, i, j, k):
    # order-1 Lorenzo; neighbours outside the volume count as zero
    p = 0.0
    if i > 0:
        p += np.float64(r[i - 1, j, k])
    if j > 0:
        p += np.float64(r[i, j - 1, k])
    if k > 0:
        p += np.float64(r[i, j, k - 1])
    if i > 0 and j > 0:
        p -= np.float64(r[i - 1, j - 1, k])
    if i > 0 and k > 0:
        p -= np.float64(r[i - 1, j, k - 1])
    if j > 0 and k > 0:
        p -= np.float64(r[i, j - 1, k - 1])
    if i > 0 and j > 0 and k > 0:
        p += np.float64(r[i - 1, j - 1, k - 1])
    return p


@numba.njit(cache=True)
def _lorenzo_decode(codes, out_idx, out_val, dims, e):
    n0, n1, n2 = dims[0], dims[1], dims[2]
    rec = np.empty((n0, n1, n2), dtype=np.float32)
    bw = 2.0 * e
    flat = 0
    o = 0
    nout = out_idx.shape[0]
    for i in range(n0):
        for j in range(n1):
            for k in range(n2):
                if o < nout and out_idx[o] == flat:
                    rec[i, j, k] = out_val[o]
                    o += 1
                else:
                    pred = _predict(rec, i, j, k)
                    rec[i, j, k] = np.float32(pred + bw * np.float64(codes[flat]))
                flat += 1
    return rec


def compress(vol: np.ndarray, cfg: CodecConfig) -> tuple[CompressedPayload, np.ndarray]:
    """Compress ``vol``; returns the payload and the matching decompressed volume."""
    x = np.ascontiguousarray(vol, dtype=np.float32)
    if x.ndim != 3:
        raise DataError(f"volume must be 3D, got shape {x.shape}")
    check_finite(x)
    codes, outlier, rec = _lorenzo_encode(x, float(cfg.abs_bound), int(cfg.max_quant_code))
    idx = np.flatnonzero(outlier).astype(np.uint64)
    vals = x.ravel()[outlier].astype(np.float32)
    stream = zlib.compress(_huffman.encode(codes), 9)
    payload = CompressedPayload(cfg, tuple(int(d) for d in x.shape), stream, idx, vals)
    return payload, as_volume(rec)


def decode_codes(payload: CompressedPayload) -> np.ndarray:
    n = int(np.prod(payload.dims))
    try:
        raw = zlib.decompress(payload.code_stream)
    except zlib.error as exc:
        raise FormatError(f"code stream is not valid: {exc}") from None
    return _huffman.decode(raw, n)


def decompress(payload) -> np.ndarray:
    if not isinstance(payload, CompressedPayload):
        payload = CompressedPayload.from_bytes(payload)
    codes = decode_codes(payload)
    rec = _lorenzo_decode(
        codes,
        payload.outlier_index.astype(np.int64),
        payload.outlier_value.astype(np.float32),
        np.asarray(payload.dims, dtype=np.int64),
        float(payload.config.abs_bound),
    )
    return as_volume(rec)


def compressed_size(payload) -> int:
    if isinstance(payload, CompressedPayload):
        return len(payload.to_bytes())
    return len(payload)


def ratio(vol_or_dims, payload) -> float:
    dims = vol_or_dims.shape if hasattr(vol_or_dims, "shape") else vol_or_dims
    return 4 * int(np.prod(dims)) / compressed_size(payload)
