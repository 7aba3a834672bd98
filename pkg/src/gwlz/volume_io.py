"""Raw FP32 volume I/O, synthetic fields and slicing.

A volume is a C-ordered 3D ``numpy.float32`` array; axis 0 is outermost.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ConfigError, DataError, DimensionError, FormatError

ByteOrder = Literal["little", "big"]
KINDS = ("constant", "cosine-field", "gaussian-mixture", "skewed-exponential")


def _dtype(byte_order: ByteOrder) -> np.dtype:
    if byte_order == "little":
        return np.dtype("<f4")
    if byte_order == "big":
        return np.dtype(">f4")
    raise ConfigError(f"unknown byte order {byte_order!r}")


def parse_dims(text: str) -> tuple[int, int, int]:
    """Parse ``"NxMxK"`` into a positive integer triple."""
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ConfigError(f"dims must look like NxMxK, got {text!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"dims must look like NxMxK, got {text!r}") from None
    return check_dims(dims)


def check_dims(dims) -> tuple[int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise ConfigError(f"dims must be three positive integers, got {dims}")
    return dims  # type: ignore[return-value]


def check_finite(values: np.ndarray) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise DataError(f"non-finite value {values.ravel()[idx]} at flat index {idx}")


def as_volume(values, dims=None) -> np.ndarray:
    """Validate and return ``values`` as a read-only C-ordered float32 volume."""
    arr = np.asarray(values, dtype=np.float32)
    if dims is not None:
        dims = check_dims(dims)
        if arr.size != int(np.prod(dims)):
            raise DimensionError(f"{arr.size} values do not fill dims {dims}")
        arr = arr.reshape(dims)
    if arr.ndim != 3:
        raise DimensionError(f"volume must be 3D, got shape {arr.shape}")
    check_dims(arr.shape)
    check_finite(arr)
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def load_raw(path, dims, byte_order: ByteOrder = "little") -> np.ndarray:
    dims = check_dims(dims)
    expected = 4 * int(np.prod(dims))
    size = os.path.getsize(path)
    if size != expected:
        raise FormatError(
            f"{path}: file has {size} bytes, dims {dims} need {expected} bytes"
        )
    values = np.fromfile(path, dtype=_dtype(byte_order))
    return as_volume(values.astype(np.float32), dims)


def save_raw(vol: np.ndarray, path, byte_order: ByteOrder = "little") -> int:
    data = np.ascontiguousarray(vol, dtype=np.float32).astype(_dtype(byte_order))
    raw = data.tobytes()
    with open(path, "wb") as fh:
        fh.write(raw)
    return len(raw)


def vrange(vol: np.ndarray) -> float:
    """max - min of the volume, computed in float64."""
    if np.size(vol) == 0:
        raise DataError("vrange of an empty volume")
    return float(np.max(vol)) - float(np.min(vol))


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    dims: tuple[int, int, int]
    seed: int = 0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown synthetic kind {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "dims", check_dims(self.dims))
        if not self.amplitude > 0:
            raise ConfigError("amplitude must be > 0")


def _smooth_noise(rng: np.random.Generator, dims, corr_len: float) -> np.ndarray:
    """Zero-mean, unit-variance Gaussian random field with a Gaussian spectrum."""
    white = rng.standard_normal(dims)
    freqs = np.meshgrid(*[np.fft.fftfreq(n) for n in dims], indexing="ij")
    k2 = sum(f * f for f in freqs)
    spectrum = np.exp(-2.0 * (np.pi * corr_len) ** 2 * k2)
    field = np.real(np.fft.ifftn(np.fft.fftn(white) * spectrum))
    field -= field.mean()
    std = field.std()
    return field / std if std > 0 else field


def gen_synthetic(spec: SyntheticSpec) -> np.ndarray:
    """Deterministic synthetic field for desk-scale experiments."""
    rng = np.random.default_rng(spec.seed)
    dims = spec.dims
    a = spec.amplitude
    if spec.kind == "constant":
        out = np.full(dims, a, dtype=np.float64)
    elif spec.kind == "cosine-field":
        grids = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij")
        out = np.zeros(dims)
        for _ in range(4):
            k = rng.uniform(0.5, 3.0, size=3) * 2 * np.pi / np.asarray(dims)
            phase = rng.uniform(0, 2 * np.pi)
            out += np.cos(sum(ki * g for ki, g in zip(k, grids)) + phase)
        out *= a / 4
    elif spec.kind == "gaussian-mixture":
        grids = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij")
        out = np.zeros(dims)
        for _ in range(6):
            center = rng.uniform(0, 1, size=3) * np.asarray(dims)
            width = rng.uniform(0.08, 0.25) * max(dims)
            weight = rng.uniform(0.3, 1.0)
            d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
            out += weight * np.exp(-d2 / (2 * width * width))
        out *= a
    else:
        # log-normal over a smooth field: dense low values, long positive tail
        field = _smooth_noise(rng, dims, corr_len=3.0)
        out = a * np.exp(1.5 * field)
    return as_volume(out.astype(np.float32))


def get_slice(vol: np.ndarray, axis: int, index: int) -> np.ndarray:
    if axis not in (0, 1, 2):
        raise ConfigError(f"axis must be 0, 1 or 2, got {axis}")
    n = vol.shape[axis]
    if not 0 <= index < n:
        raise IndexError(f"slice index {index} out of range [0, {n}) on axis {axis}")
    return np.take(vol, index, axis=axis).copy()
