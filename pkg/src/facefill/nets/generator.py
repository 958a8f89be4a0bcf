"""The inpainting generator.

Thirteen gated temporal-shift convolutions arranged as encoder, dilated
bottleneck, and decoder: a 5x5 input layer, two 4x4 stride-2 downsampling
layers, 3x3 layers with the fixed dilation ladder 2-4-8-16, and two 2x
upsampling stages back to full resolution. Self-attention sits after each
downsampling block (or after the bottleneck, selectable). The bounded output
is composited so that pixels outside the occlusion pass through bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from ..validation import InputError
from .blocks import GatedTSMConv, SelfAttention2d, UpsampleGatedTSMConv

DILATION_LADDER = (2, 4, 8, 16)
GENERATOR_LAYERS = 13
INPUT_CHANNELS = 8  # frames(3) + mask(1) + landmark map(1) + reference(3)


@dataclass
class GeneratorConfig:
    base_channels: int = 16
    shift_fraction: float = 0.25
    shift_init: str = "shift"
    attention_placement: str = "downsample"  # or "bottleneck"
    negative_slope: float = 0.2
    feature_norm: bool = True
    dilations: tuple = field(default=DILATION_LADDER)

    def __post_init__(self):
        if tuple(self.dilations) != DILATION_LADDER:
            raise InputError(f"dilation schedule is fixed at {DILATION_LADDER}")
        if self.attention_placement not in ("downsample", "bottleneck"):
            raise InputError("attention_placement must be 'downsample' or "
                             "'bottleneck'")


@dataclass
class GeneratorInput:
    """Per-clip conditioning: masked frames, mask, landmark maps, reference.

    Spatial shapes must agree; mask and reference broadcast over time. The
    channel concatenation order is fixed: frames, mask, landmarks, reference.
    """

    masked_frames: np.ndarray   # [T, H, W, 3]
    mask: np.ndarray            # [H, W] or [H, W, 1]
    landmark_maps: np.ndarray   # [T, H, W, 1]
    reference: np.ndarray       # [H, W, 3]

    def __post_init__(self):
        self.masked_frames = np.asarray(self.masked_frames, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64).reshape(
            self.mask.shape[0], self.mask.shape[1], -1)[:, :, :1]
        self.landmark_maps = np.asarray(self.landmark_maps, dtype=np.float64)
        self.reference = np.asarray(self.reference, dtype=np.float64)
        t, h, w, c = self.masked_frames.shape
        if c != 3:
            raise InputError("masked_frames must be [T, H, W, 3]")
        if self.mask.shape[:2] != (h, w):
            raise InputError("mask spatial shape does not match frames")
        if self.landmark_maps.shape != (t, h, w, 1):
            raise InputError("landmark_maps must be [T, H, W, 1]")
        if self.reference.shape != (h, w, 3):
            raise InputError("reference must be [H, W, 3]")

    @property
    def frame_count(self) -> int:
        return self.masked_frames.shape[0]

    def to_tensor(self, dtype=torch.float32) -> torch.Tensor:
        """Stack into the generator's [T, 8, H, W] input tensor."""
        t = self.frame_count
        frames = torch.as_tensor(self.masked_frames, dtype=dtype).permute(0, 3, 1, 2)
        mask = torch.as_tensor(self.mask, dtype=dtype).permute(2, 0, 1)
        mask = mask.unsqueeze(0).expand(t, -1, -1, -1)
        lm_maps = torch.as_tensor(self.landmark_maps, dtype=dtype).permute(0, 3, 1, 2)
        ref = torch.as_tensor(self.reference, dtype=dtype).permute(2, 0, 1)
        ref = ref.unsqueeze(0).expand(t, -1, -1, -1)
        return torch.cat([frames, mask, lm_maps, ref], dim=1)


def composite(generated: torch.Tensor, frames: torch.Tensor,
              mask: torch.Tensor) -> torch.Tensor:
    """Replace only occluded pixels; known pixels pass through bitwise."""
    return torch.where(mask > 0.5, generated, frames)


class InpaintGenerator(nn.Module):
    """Gated-TSM encoder / dilated bottleneck / decoder, 13 conv layers."""

    def __init__(self, config: GeneratorConfig | None = None):
        super().__init__()
        self.config = config or GeneratorConfig()
        c = self.config.base_channels
        kw = dict(shift_fraction=self.config.shift_fraction,
                  shift_init=self.config.shift_init,
                  negative_slope=self.config.negative_slope)
        kwn = dict(kw, norm=self.config.feature_norm)
        down_attention = self.config.attention_placement == "downsample"

        # first and last layers stay unnormalized, like the interior ones
        # carry the stabilization
        stages: list[nn.Module] = [
            GatedTSMConv(INPUT_CHANNELS, c, 5, **kw),
            GatedTSMConv(c, 2 * c, 4, stride=2, **kwn),
        ]
        if down_attention:
            stages.append(SelfAttention2d(2 * c))
        stages.append(GatedTSMConv(2 * c, 4 * c, 4, stride=2, **kwn))
        if down_attention:
            stages.append(SelfAttention2d(4 * c))
        stages.append(GatedTSMConv(4 * c, 4 * c, 3, **kwn))
        for dilation in self.config.dilations:
            stages.append(GatedTSMConv(4 * c, 4 * c, 3, dilation=dilation, **kwn))
        if not down_attention:
            stages.append(SelfAttention2d(4 * c))
        stages += [
            GatedTSMConv(4 * c, 4 * c, 3, **kwn),
            UpsampleGatedTSMConv(4 * c, 2 * c, 3, **kwn),
            GatedTSMConv(2 * c, 2 * c, 3, **kwn),
            UpsampleGatedTSMConv(2 * c, c, 3, **kwn),
            GatedTSMConv(c, 3, 3, activate=False, **kw),
        ]
        self.stages = nn.Sequential(*stages)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Raw inpainting of a [T, 8, H, W] input; values in [0, 1]."""
        if x.ndim != 4 or x.shape[1] != INPUT_CHANNELS:
            raise InputError(f"generator input must be [T, {INPUT_CHANNELS}, H, W], "
                             f"got {tuple(x.shape)}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise InputError("frame height and width must be multiples of 4")
        return torch.sigmoid(self.stages(x))

    def forward_composited(self, gen_input: GeneratorInput,
                           dtype=torch.float32) -> torch.Tensor:
        """Inpaint and composite; returns [T, 3, H, W] with grad attached."""
        x = gen_input.to_tensor(dtype)
        generated = self.forward(x)
        frames = x[:, :3]
        mask = x[:, 3:4]
        return composite(generated, frames, mask)

    @torch.no_grad()
    def generate(self, gen_input: GeneratorInput) -> np.ndarray:
        """Inpaint to [T, H, W, 3]; composited in float64 so pixels outside
        the occlusion are bitwise copies of the input frames."""
        x = gen_input.to_tensor(next(self.parameters()).dtype)
        generated = self.forward(x).permute(0, 2, 3, 1).numpy().astype(np.float64)
        mask = gen_input.mask[None, :, :, :]
        return np.where(mask > 0.5, generated, gen_input.masked_frames)
