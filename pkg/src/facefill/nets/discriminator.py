"""Patch critic with temporal shift.

Six convolution layers, each preceded by a learnable temporal shift; the
first four downsample by 2, so a 128x128 clip yields an 8x8 patch score map
per frame. Scores are unbounded (Wasserstein convention, no final sigmoid).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..validation import InputError
from .tsm import LearnableTemporalShift

DISCRIMINATOR_LAYERS = 6
CRITIC_INPUT_CHANNELS = 4  # frames(3) + mask(1)


@dataclass
class DiscriminatorConfig:
    base_channels: int = 16
    shift_fraction: float = 0.25
    shift_init: str = "shift"
    negative_slope: float = 0.2


class _ShiftConv(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride,
                 fraction, init, slope, activate=True):
        super().__init__()
        self.shift = LearnableTemporalShift(in_channels, fraction, init)
        padding = (kernel_size - 1) // 2
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size,
                              stride=stride, padding=padding)
        self.activation = nn.LeakyReLU(slope) if activate else None

    def forward(self, x):
        x = self.conv(self.shift(x))
        return self.activation(x) if self.activation is not None else x


class PatchDiscriminator(nn.Module):
    def __init__(self, config: DiscriminatorConfig | None = None):
        super().__init__()
        self.config = config or DiscriminatorConfig()
        c = self.config.base_channels
        kw = dict(fraction=self.config.shift_fraction,
                  init=self.config.shift_init,
                  slope=self.config.negative_slope)
        self.layers = nn.Sequential(
            _ShiftConv(CRITIC_INPUT_CHANNELS, c, 4, 2, **kw),
            _ShiftConv(c, 2 * c, 4, 2, **kw),
            _ShiftConv(2 * c, 4 * c, 4, 2, **kw),
            _ShiftConv(4 * c, 4 * c, 4, 2, **kw),
            _ShiftConv(4 * c, 4 * c, 3, 1, **kw),
            _ShiftConv(4 * c, 1, 3, 1, activate=False, **kw),
        )

    def forward(self, frames: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Score a [T, 3, H, W] clip (mask [T or 1, 1, H, W]); returns
        a [T, H', W'] real-valued patch map."""
        if frames.ndim != 4 or frames.shape[1] != 3:
            raise InputError(f"critic expects [T, 3, H, W] frames, got "
                             f"{tuple(frames.shape)}")
        if mask.shape[0] == 1 and frames.shape[0] > 1:
            mask = mask.expand(frames.shape[0], -1, -1, -1)
        x = torch.cat([frames, mask.to(frames.dtype)], dim=1)
        return self.layers(x).squeeze(1)
