"""Weight-shared strided convolutional feature extractor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError


@dataclass(frozen=True)
class EncoderConfig:
    channels_per_stage: tuple = (8, 16, 32)
    stride_per_stage: tuple = (2, 2, 2)
    kernel: int = 3
    in_channels: int = 1

    def __post_init__(self):
        if len(self.channels_per_stage) != len(self.stride_per_stage) or not self.channels_per_stage:
            raise ConfigError("channels_per_stage and stride_per_stage must be non-empty and equally long")
        if self.kernel % 2 != 1:
            raise ConfigError("kernel size must be odd for same padding")

    @property
    def out_channels(self):
        return self.channels_per_stage[-1]

    @property
    def total_stride(self):
        return int(np.prod(self.stride_per_stage))

    def feature_shape(self, height, width):
        s = self.total_stride
        if height % s or width % s:
            raise ConfigError(f"image {height}x{width} not divisible by total stride {s}")
        return (self.out_channels, height // s, width // s)


def init_encoder(cfg: EncoderConfig, rng, dtype=np.float32):
    """Kaiming-uniform (fan-in) kernels and zero biases, keyed ``encoder.convI.{w,b}``."""
    params = {}
    cin = cfg.in_channels
    for i, cout in enumerate(cfg.channels_per_stage):
        fan_in = cin * cfg.kernel * cfg.kernel
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(cout, cin, cfg.kernel, cfg.kernel))
        params[f"encoder.conv{i}.w"] = ad.parameter(w.astype(dtype), name=f"encoder.conv{i}.w")
        params[f"encoder.conv{i}.b"] = ad.parameter(np.zeros(cout, dtype=dtype), name=f"encoder.conv{i}.b")
        cin = cout
    return params


def encode(img, params, cfg: EncoderConfig):
    """Map a ``(H, W)`` or ``(1, H, W)`` image to a ``(C, H/s, W/s)`` feature map."""
    x = ad.as_tensor(img)
    if x.ndim == 2:
        x = x.reshape(1, *x.shape)
    cfg.feature_shape(x.shape[-2], x.shape[-1])
    for i, stride in enumerate(cfg.stride_per_stage):
        x = ad.conv2d(x, params[f"encoder.conv{i}.w"], params[f"encoder.conv{i}.b"], stride=stride)
        x = ad.relu(x)
    return x
