"""Distortion and efficiency metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError
from .volume_io import vrange


def mse(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    d = x.astype(np.float64) - y.astype(np.float64)
    return float(np.mean(d * d))


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """PSNR in dB with the peak taken as the value range of ``x`` (the original)."""
    err = mse(x, y)
    if err == 0.0:
        return math.inf
    rng = vrange(np.asarray(x))
    if rng == 0.0:
        raise DataError("PSNR undefined: original has zero range but nonzero error")
    return 20.0 * math.log10(rng) - 10.0 * math.log10(err)


def improvement_pct(psnr_base: float, psnr_enh: float) -> float:
    if not math.isfinite(psnr_base) or psnr_base <= 0:
        raise DataError(f"improvement undefined for base PSNR {psnr_base}")
    return (psnr_enh - psnr_base) / psnr_base * 100.0


def fmt_value(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return repr(float(v))


@dataclass
class QualityReport:
    mse: float
    psnr: float
    cr: float
    overhead: float
    improvement_pct: float

    def lines(self) -> list[str]:
        return [
            f"mse={fmt_value(self.mse)}",
            f"psnr_db={fmt_value(self.psnr)}",
            f"cr={fmt_value(self.cr)}",
            f"overhead={fmt_value(self.overhead)}",
            f"improvement_pct={fmt_value(self.improvement_pct)}",
        ]

    def __str__(self) -> str:
        return "\n".join(self.lines())


def report(original, decompressed, enhanced, archive) -> QualityReport:
    """Aggregate metrics for one compression run.

    ``archive`` is a :class:`gwlz.container.GwlzArchive`; its payload gives the
    compression ratio (the enhancer section is excluded, as with the base ratio).
    """
    from .base_codec import ratio
    from .container import overhead_ratio

    base = psnr(original, decompressed)
    enh = psnr(original, enhanced)
    if math.isinf(base) and math.isinf(enh):
        imp = 0.0
    elif math.isfinite(base) and base > 0:
        imp = improvement_pct(base, enh)
    else:
        imp = math.nan
    return QualityReport(
        mse=mse(original, enhanced),
        psnr=enh,
        cr=ratio(original, archive.payload),
        overhead=overhead_ratio(archive),
        improvement_pct=imp,
    )
