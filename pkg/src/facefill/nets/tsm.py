"""Learnable temporal shift.

A designated fraction of channels is mixed across neighboring frames by a
per-channel kernel of size 3 (zero-padded at clip boundaries); the remaining
channels pass through untouched. Kernel taps are ordered (previous, current,
next): ``out[t] = k0*in[t-1] + k1*in[t] + k2*in[t+1]``.
"""

import torch
import torch.nn as nn


class LearnableTemporalShift(nn.Module):
    """Per-channel temporal mixing over a [T, C, H, W] feature clip.

    ``fraction`` is the share of channels shifted per direction (at most
    half). With ``init='shift'`` the first group starts as a hard shift from
    the previous frame and the second from the next frame; ``init='identity'``
    starts every kernel at the center tap, making the module a no-op.
    """

    def __init__(self, channels, fraction=0.25, init="shift"):
        super().__init__()
        if not 0.0 < fraction <= 0.5:
            raise ValueError(f"fraction must be in (0, 0.5], got {fraction}")
        if init not in ("shift", "identity"):
            raise ValueError(f"unknown init {init!r}")
        self.channels = channels
        per_direction = int(channels * fraction)
        self.shifted = 2 * per_direction
        kernel = torch.zeros(self.shifted, 3)
        if init == "identity" or per_direction == 0:
            kernel[:, 1] = 1.0
        else:
            kernel[:per_direction, 0] = 1.0   # sees the previous frame
            kernel[per_direction:, 2] = 1.0   # sees the next frame
        self.kernel = nn.Parameter(kernel)

    def forward(self, x):
        if self.shifted == 0:
            return x
        t = x.shape[0]
        head, tail = x[:, :self.shifted], x[:, self.shifted:]
        zero = torch.zeros_like(head[:1])
        prev = torch.cat([zero, head[:t - 1]], dim=0)
        nxt = torch.cat([head[1:], zero], dim=0)
        k = self.kernel.to(x.dtype)[None, :, None, None, :]
        mixed = (k[..., 0] * prev + k[..., 1] * head + k[..., 2] * nxt)
        return torch.cat([mixed, tail], dim=1)
