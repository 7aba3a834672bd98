"""Group-wise residual enhancement: fit one micro network per value group on
(decompressed -> residual) slice pairs, then add the predicted residual back."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import micro_nn
from .errors import ConfigError, DimensionError
from .grouping import GroupSpec, GroupStats, build_spec, compute_stats, masked_pair, normalize_input
from .micro_nn import ModelWeights, NothingToTrain, TrainConfig

log = logging.getLogger(__name__)

MIN_GROUP_SIZE = 64
_PREDICT_CHUNK = 16


@dataclass
class EnhancerBundle:
    spec: GroupSpec
    stats: GroupStats
    models: list  # ModelWeights, or None for a zero-model group
    channels: int = micro_nn.DEFAULT_CHANNELS
    kernel: int = micro_nn.KERNEL
    layers: int = micro_nn.LAYERS
    final_loss: np.ndarray | None = None  # float32 per group, NaN when untrained
    train_config: TrainConfig | None = None
    histories: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.models) != self.spec.n_groups:
            raise ConfigError("one model slot per group required")
        if self.final_loss is None:
            self.final_loss = np.full(self.spec.n_groups, np.nan, np.float32)

    @property
    def n_groups(self) -> int:
        return self.spec.n_groups

    @property
    def n_models(self) -> int:
        return sum(m is not None for m in self.models)


@dataclass(frozen=True)
class ClampMode:
    mode: str = "none"
    e_abs: float | None = None

    def __post_init__(self):
        if self.mode not in ("none", "bound2e"):
            raise ConfigError(f"clamp mode must be 'none' or 'bound2e', got {self.mode!r}")
        if self.mode == "bound2e" and not (self.e_abs is not None and self.e_abs > 0):
            raise ConfigError("bound2e clamping needs e_abs > 0")


def _slices(vol: np.ndarray, axis: int) -> np.ndarray:
    if axis not in (0, 1, 2):
        raise ConfigError(f"axis must be 0, 1 or 2, got {axis}")
    return np.moveaxis(np.asarray(vol), axis, 0)


def _plane_too_small(shape, axis) -> bool:
    # the network needs at least a 3x3 slice plane
    plane = [n for i, n in enumerate(shape) if i != axis]
    return min(plane) < micro_nn.KERNEL


def group_pairs(decompressed, residual, g, spec, stats, axis=0):
    """Masked training pairs of group ``g`` for every slice that touches it."""
    dec_s = _slices(decompressed, axis)
    res_s = _slices(residual, axis)
    pairs = []
    for i in range(dec_s.shape[0]):
        p = masked_pair(dec_s[i], res_s[i], g, spec, stats)
        if p.mask.any():
            pairs.append(p)
    return pairs


def fit(original, decompressed, n_groups: int = 20, strategy: str = "quantile",
        cfg: TrainConfig = TrainConfig(), axis: int = 0,
        channels: int = micro_nn.DEFAULT_CHANNELS, threads: int = 1,
        min_group_size: int = MIN_GROUP_SIZE) -> EnhancerBundle:
    """Train the per-group enhancers for one (original, decompressed) pair."""
    x = np.asarray(original, np.float32)
    xd = np.asarray(decompressed, np.float32)
    if x.shape != xd.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {xd.shape}")
    if n_groups < 1:
        raise ConfigError("n_groups must be >= 1")
    residual = x.astype(np.float64) - xd.astype(np.float64)
    spec = build_spec(xd, n_groups, strategy)
    stats = compute_stats(x, xd, spec)

    _slices(x, axis)
    tiny = _plane_too_small(x.shape, axis)
    if tiny:
        log.info("slice plane of %s along axis %d is below 3x3; no models trained", x.shape, axis)

    def train_one(g):
        if tiny or stats.count[g] < min_group_size or stats.res_scale[g] == 0:
            return None, np.zeros(0)
        pairs = group_pairs(xd, residual, g, spec, stats, axis)
        try:
            return micro_nn.train_group(pairs, replace(cfg, seed=cfg.seed ^ g), channels)
        except NothingToTrain:
            return None, np.zeros(0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(train_one, range(n_groups)))
    else:
        results = [train_one(g) for g in range(n_groups)]

    models = [w for w, _ in results]
    histories = [h for _, h in results]
    final = np.array(
        [h[-1] if len(h) else (0.0 if stats.res_scale[g] == 0 else np.nan)
         for g, h in enumerate(histories)],
        dtype=np.float32,
    )
    for g, h in enumerate(histories):
        if len(h):
            log.info("group %d: %d elements, loss %.6g -> %.6g", g, stats.count[g], h[0], h[-1])
    return EnhancerBundle(spec, stats, models, channels=channels, final_loss=final,
                          train_config=cfg, histories=histories)


def predict_residual(bundle: EnhancerBundle, decompressed, axis: int = 0) -> np.ndarray:
    """Residual map predicted group by group; float32, same shape as the input."""
    xd = np.asarray(decompressed, np.float32)
    dec_s = _slices(xd, axis)
    out = np.zeros(dec_s.shape, np.float64)
    eps = bundle.train_config.bn_epsilon if bundle.train_config else 1e-5
    models = [] if _plane_too_small(xd.shape, axis) else bundle.models
    for g, w in enumerate(models):
        s = float(bundle.stats.res_scale[g])
        if w is None or s == 0.0:
            continue
        for start in range(0, dec_s.shape[0], _PREDICT_CHUNK):
            chunk = dec_s[start:start + _PREDICT_CHUNK]
            inp, mask = normalize_input(chunk, g, bundle.spec, bundle.stats)
            if not mask.any():
                continue
            pred = micro_nn.forward(w, inp, mode="eval", eps=eps)
            out[start:start + len(chunk)][mask] = pred[mask] * s
    return np.ascontiguousarray(np.moveaxis(out, 0, axis).astype(np.float32))


def apply_residual(decompressed, residual, clamp: ClampMode = ClampMode()) -> np.ndarray:
    xd = np.asarray(decompressed, np.float32)
    r = np.asarray(residual, np.float64)
    if clamp.mode == "bound2e":
        e = float(clamp.e_abs)
        r = np.clip(r, -e, e)
        out = (xd.astype(np.float64) + r).astype(np.float32)
        # float32 rounding may step past the clamp; pull such elements back by one ulp
        over = np.abs(out.astype(np.float64) - xd.astype(np.float64)) > e
        while over.any():
            out[over] = np.nextafter(out[over], xd[over])
            over = np.abs(out.astype(np.float64) - xd.astype(np.float64)) > e
        return out
    return (xd.astype(np.float64) + r).astype(np.float32)


def enhance(decompressed, bundle: EnhancerBundle, clamp: ClampMode = ClampMode(),
            axis: int = 0) -> np.ndarray:
    return apply_residual(decompressed, predict_residual(bundle, decompressed, axis), clamp)
