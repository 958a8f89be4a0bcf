"""Building blocks: gated temporal-shift convolutions and self-attention."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .tsm import LearnableTemporalShift


class GatedTSMConv(nn.Module):
    """Temporal shift, then a feature conv modulated by a sigmoid gate conv.

    ``out = activation(norm(conv_f(shift(x)))) * sigmoid(conv_g(shift(x)))``;
    the frame axis doubles as the batch axis for normalization. Feature
    normalization keeps the deep unnormalized stack away from saturating the
    bounded output, which would kill gradients for good.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 dilation=1, shift_fraction=0.25, shift_init="shift",
                 negative_slope=0.2, activate=True, norm=False):
        super().__init__()
        padding = dilation * (kernel_size - 1) // 2
        self.shift = LearnableTemporalShift(in_channels, shift_fraction, shift_init)
        self.feature = nn.Conv2d(in_channels, out_channels, kernel_size,
                                 stride=stride, padding=padding, dilation=dilation)
        self.gate = nn.Conv2d(in_channels, out_channels, kernel_size,
                              stride=stride, padding=padding, dilation=dilation)
        self.norm = nn.BatchNorm2d(out_channels) if norm else None
        self.activation = nn.LeakyReLU(negative_slope) if activate else None

    def forward(self, x):
        x = self.shift(x)
        feat = self.feature(x)
        if self.norm is not None:
            feat = self.norm(feat)
        if self.activation is not None:
            feat = self.activation(feat)
        return feat * torch.sigmoid(self.gate(x))


class UpsampleGatedTSMConv(nn.Module):
    """Nearest-neighbor 2x upsampling followed by a gated TSM conv."""

    def __init__(self, in_channels, out_channels, kernel_size, **kwargs):
        super().__init__()
        self.conv = GatedTSMConv(in_channels, out_channels, kernel_size, **kwargs)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        return self.conv(x)


class SelfAttention2d(nn.Module):
    """Residual self-attention over spatial positions, per frame.

    ``out = x + gamma * attend(x)`` with gamma starting at zero, so the layer
    is the identity at initialization. Attention weights are a softmax over
    key positions (rows sum to one). Frames attend independently and are
    processed in chunks, which bounds the [chunk, HW, HW] weight tensor for
    long clips at high resolution.
    """

    FRAME_CHUNK = 8

    def __init__(self, channels):
        super().__init__()
        inner = max(1, channels // 8)
        self.query = nn.Conv2d(channels, inner, 1)
        self.key = nn.Conv2d(channels, inner, 1)
        self.value = nn.Conv2d(channels, channels, 1)
        self.gamma = nn.Parameter(torch.zeros(1))

    def attention_weights(self, x):
        t, _, h, w = x.shape
        q = self.query(x).reshape(t, -1, h * w).permute(0, 2, 1)
        k = self.key(x).reshape(t, -1, h * w)
        return torch.softmax(torch.bmm(q, k), dim=-1)

    def forward(self, x):
        t, c, h, w = x.shape
        chunks = []
        for start in range(0, t, self.FRAME_CHUNK):
            piece = x[start:start + self.FRAME_CHUNK]
            attn = self.attention_weights(piece)
            v = self.value(piece).reshape(piece.shape[0], c, h * w)
            chunks.append(torch.bmm(v, attn.permute(0, 2, 1))
                          .reshape(piece.shape[0], c, h, w))
        return x + self.gamma * torch.cat(chunks, dim=0)
