"""End-to-end compression and reconstruction built from the codec, the
enhancer and the container."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import base_codec, container, enhancer, metrics, micro_nn
from .enhancer import ClampMode
from .micro_nn import TrainConfig


@dataclass
class CompressResult:
    archive: container.GwlzArchive
    decompressed: np.ndarray
    enhanced: np.ndarray
    bundle: enhancer.EnhancerBundle | None
    report: metrics.QualityReport


def compress_volume(vol, reb: float, n_groups: int = 20, strategy: str = "quantile",
                    cfg: TrainConfig = TrainConfig(), axis: int = 0,
                    channels: int = micro_nn.DEFAULT_CHANNELS, threads: int = 1,
                    use_enhancer: bool = True, clamp: str = "none") -> CompressResult:
    """Compress, train the enhancers and assemble a ``.gwlz`` archive in memory.

    The recorded enhanced PSNR is measured with the bundle as stored (float32
    stats and weights), i.e. exactly what decompression will reproduce.
    """
    codec_cfg = base_codec.CodecConfig.for_volume(vol, reb)
    payload, dec = base_codec.compress(vol, codec_cfg)
    bundle = None
    enhanced = dec
    if use_enhancer:
        trained = enhancer.fit(vol, dec, n_groups, strategy, cfg, axis, channels, threads)
        bundle = container.decode_bundle(container.encode_bundle(trained))
        bundle.histories = trained.histories
        mode = ClampMode(clamp, codec_cfg.abs_bound) if clamp != "none" else ClampMode()
        enhanced = enhancer.enhance(dec, bundle, mode, axis)
    quality = (metrics.psnr(vol, dec), metrics.psnr(vol, enhanced))
    archive = container.GwlzArchive.build(payload, bundle, quality, axis, clamp != "none")
    return CompressResult(archive, dec, enhanced, bundle,
                          metrics.report(vol, dec, enhanced, archive))


def decompress_archive(archive: container.GwlzArchive, use_enhancer: bool = True,
                       clamp: str | None = None) -> tuple[np.ndarray, str]:
    """Returns the reconstruction and a short note on which path was taken.

    ``clamp=None`` follows the archive's recommendation.
    """
    dec = base_codec.decompress(archive.payload)
    if not archive.has_enhancer:
        return dec, "archive has no enhancer; plain decompressed output"
    if not use_enhancer:
        return dec, "enhancer skipped; plain decompressed output"
    if clamp is None:
        clamp = "bound2e" if archive.clamp_recommended else "none"
    mode = ClampMode(clamp, archive.e_abs) if clamp != "none" else ClampMode()
    out = enhancer.enhance(dec, archive.bundle, mode, archive.axis)
    return out, f"enhanced output (clamp={clamp})"
