"""Clip-level data containers and mask arithmetic.

A clip is a fixed-length stack of RGB frames in [0, 1]. The occlusion mask is
a single binary [H, W] map shared by every frame (the headset region does not
move), with 1 marking pixels to inpaint. The reference frame carries identity
cues: a single frame with everything *outside* the occluded region zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..validation import InputError, check_frames, check_index, check_mask


@dataclass
class VideoClip:
    """A [T, H, W, 3] stack of RGB frames with values in [0, 1]."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = check_frames(self.frames)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def copy(self) -> "VideoClip":
        return VideoClip(self.frames.copy())


@dataclass
class OcclusionMask:
    """Binary [H, W] map; 1 = occluded (to be inpainted), identical per frame."""

    mask: np.ndarray

    def __post_init__(self):
        self.mask = check_mask(self.mask)

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def occluded_fraction(self) -> float:
        return float(self.mask.mean())


@dataclass
class ReferenceFrame:
    """One frame with non-occluded pixels zeroed, plus the index it came from."""

    pixels: np.ndarray
    source_index: int = 0

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 3 or pixels.shape[-1] != 3:
            raise InputError(f"reference pixels must be [H, W, 3], got {pixels.shape}")
        self.pixels = pixels


def apply_mask(clip: VideoClip, mask: OcclusionMask) -> VideoClip:
    """Zero out occluded pixels in every frame; the input clip is untouched."""
    if (clip.height, clip.width) != (mask.height, mask.width):
        raise InputError(
            f"mask shape {mask.mask.shape} does not match clip frames "
            f"{(clip.height, clip.width)}")
    keep = (1.0 - mask.mask)[None, :, :, None]
    return VideoClip(clip.frames * keep)


def prepare_reference(clip: VideoClip, mask: OcclusionMask, index: int = 0) -> ReferenceFrame:
    """Extract frame ``index`` and zero every pixel outside the occluded region.

    The result carries exactly the information the masked frames lack, so the
    two partition the source frame when the indices coincide.
    """
    if (clip.height, clip.width) != (mask.height, mask.width):
        raise InputError(
            f"mask shape {mask.mask.shape} does not match clip frames "
            f"{(clip.height, clip.width)}")
    index = check_index(index, clip.frame_count, "reference index")
    pixels = clip.frames[index] * mask.mask[:, :, None]
    return ReferenceFrame(pixels=pixels, source_index=index)


def headset_mask(height: int, width: int,
                 top: float = 0.25, bottom: float = 0.55,
                 left: float = 0.14, right: float = 0.86) -> OcclusionMask:
    """Canonical rectangular headset occlusion covering eyes and eyebrows.

    Bounds are fractions of the frame; defaults blank the upper-face band.
    """
    mask = np.zeros((height, width), dtype=np.float64)
    r0, r1 = int(round(top * height)), int(round(bottom * height))
    c0, c1 = int(round(left * width)), int(round(right * width))
    mask[r0:r1, c0:c1] = 1.0
    return OcclusionMask(mask)


@dataclass
class ClipSample:
    """One training/evaluation unit: frames, occlusion, reference, landmarks.

    ``landmarks`` is a [T, N, 3] array of per-frame landmark points (x, y
    normalized, z relative depth); None when no landmark source is attached.
    """

    clip: VideoClip
    mask: OcclusionMask
    reference: ReferenceFrame
    landmarks: np.ndarray | None = None
    name: str = "clip"
    meta: dict = field(default_factory=dict)
