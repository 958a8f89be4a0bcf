"""Clip data: containers, mask arithmetic, synthetic generation, disk formats."""

from .clip import (
    ClipSample,
    OcclusionMask,
    ReferenceFrame,
    VideoClip,
    apply_mask,
    headset_mask,
    prepare_reference,
)
from .io import (
    ClipIOError,
    load_clip,
    load_dataset,
    load_mask,
    load_sample,
    save_clip,
    save_dataset,
    save_mask,
    save_sample,
)
from .synthetic import (
    SyntheticFaceSpec,
    generate_synthetic_clip,
    jittered_spec,
    synthetic_dataset,
)

__all__ = [
    "ClipSample", "OcclusionMask", "ReferenceFrame", "VideoClip",
    "apply_mask", "headset_mask", "prepare_reference",
    "ClipIOError", "load_clip", "load_dataset", "load_mask", "load_sample",
    "save_clip", "save_dataset", "save_mask", "save_sample",
    "SyntheticFaceSpec", "generate_synthetic_clip", "jittered_spec",
    "synthetic_dataset",
]
