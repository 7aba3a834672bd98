"""Error-bounded lossy compression of 3D FP32 volumes with group-wise learned
residual enhancers."""

from .base_codec import CodecConfig, CompressedPayload, compress, decompress
from .enhancer import ClampMode, EnhancerBundle, enhance, fit, predict_residual
from .errors import (ConfigError, CorruptionError, DataError, DimensionError, FormatError,
                     GwlzError, UnsupportedVersionError)
from .metrics import improvement_pct, mse, psnr
from .micro_nn import ModelWeights, TrainConfig

__version__ = "0.1.0"
