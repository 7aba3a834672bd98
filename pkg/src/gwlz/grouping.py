"""Value-magnitude grouping of decompressed data, per-group statistics and
masked training pairs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

STRATEGIES = ("quantile", "equal_width")


@dataclass(frozen=True)
class GroupSpec:
    n_groups: int
    boundaries: tuple[float, ...]
    strategy: str = "quantile"

    def __post_init__(self):
        if self.n_groups < 1:
            raise ConfigError("n_groups must be >= 1")
        if len(self.boundaries) != self.n_groups - 1:
            raise ConfigError("need n_groups - 1 boundaries")
        if any(b > c for b, c in zip(self.boundaries, self.boundaries[1:])):
            raise ConfigError("boundaries must be non-decreasing")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")


@dataclass
class GroupStats:
    """Per-group arrays, all of length ``n_groups``.

    Bounds and scales are stored as float32 because that is what the
    container keeps; both sides of the pipeline normalise with these values.
    """

    in_min: np.ndarray
    in_max: np.ndarray
    res_scale: np.ndarray
    count: np.ndarray

    def __len__(self):
        return len(self.count)


@dataclass
class MaskedPair:
    input: np.ndarray
    target: np.ndarray
    mask: np.ndarray


def normalize_strategy(name: str) -> str:
    name = name.replace("-", "_")
    if name not in STRATEGIES:
        raise ConfigError(f"unknown strategy {name!r}; choose from {STRATEGIES}")
    return name


def build_spec(decompressed: np.ndarray, n_groups: int, strategy: str = "quantile") -> GroupSpec:
    strategy = normalize_strategy(strategy)
    if n_groups < 1:
        raise ConfigError("n_groups must be >= 1")
    v = np.sort(np.asarray(decompressed, dtype=np.float64).ravel())
    n = v.size
    if strategy == "quantile":
        bounds = []
        for k in range(1, n_groups):
            # midpoint of the order statistics straddling position k*n/G
            pos = k * n // n_groups
            bounds.append(0.5 * (v[max(pos - 1, 0)] + v[min(pos, n - 1)]))
    else:
        lo, hi = v[0], v[-1]
        bounds = [lo + (hi - lo) * k / n_groups for k in range(1, n_groups)]
    return GroupSpec(n_groups, tuple(float(b) for b in bounds), strategy)


def assign(value, spec: GroupSpec):
    """Group id(s): number of boundaries <= value. Works on scalars and arrays."""
    b = np.asarray(spec.boundaries, dtype=np.float64)
    g = np.searchsorted(b, np.asarray(value, dtype=np.float64), side="right")
    return int(g) if np.ndim(g) == 0 else g.astype(np.int64)


def _round_up_f32(x: float) -> np.float32:
    f = np.float32(x)
    if float(f) < x:
        f = np.nextafter(f, np.float32(np.inf))
    return f


def compute_stats(original: np.ndarray, decompressed: np.ndarray, spec: GroupSpec) -> GroupStats:
    if original.shape != decompressed.shape:
        raise DimensionError(f"shape mismatch {original.shape} vs {decompressed.shape}")
    dec = np.asarray(decompressed, dtype=np.float64).ravel()
    res = np.asarray(original, dtype=np.float64).ravel() - dec
    gid = assign(dec, spec)
    G = spec.n_groups
    in_min = np.zeros(G, np.float32)
    in_max = np.zeros(G, np.float32)
    scale = np.zeros(G, np.float32)
    count = np.bincount(gid, minlength=G).astype(np.int64)
    for g in range(G):
        if count[g] == 0:
            continue
        sel = gid == g
        in_min[g] = np.float32(dec[sel].min())
        in_max[g] = np.float32(dec[sel].max())
        scale[g] = _round_up_f32(float(np.abs(res[sel]).max()))
    return GroupStats(in_min, in_max, scale, count)


def normalize_input(dec_slice: np.ndarray, g: int, spec: GroupSpec, stats: GroupStats):
    """In-group min-max scaled input with zero placeholders, plus the mask."""
    dec = np.asarray(dec_slice, dtype=np.float64)
    mask = assign(dec, spec) == g
    lo = float(stats.in_min[g])
    width = float(stats.in_max[g]) - lo
    if width > 0:
        inp = np.where(mask, (dec - lo) / width, 0.0)
    else:
        inp = np.zeros_like(dec)
    return inp, mask


def masked_pair(dec_slice, res_slice, g: int, spec: GroupSpec, stats: GroupStats) -> MaskedPair:
    if np.shape(dec_slice) != np.shape(res_slice):
        raise DimensionError("slice shapes differ")
    inp, mask = normalize_input(dec_slice, g, spec, stats)
    s = float(stats.res_scale[g])
    if s > 0:
        target = np.where(mask, np.asarray(res_slice, dtype=np.float64) / s, 0.0)
    else:
        target = np.zeros(inp.shape)
    return MaskedPair(inp, target, mask.astype(np.uint8))
