"""Input validation helpers shared across the package.

Every public entry point funnels its array arguments through these checks so
that malformed input fails with a clear message instead of a shape error deep
inside torch or numpy.
"""

from __future__ import annotations

import numpy as np


class InputError(ValueError):
    """Raised when a caller hands us data that violates a documented contract."""


def check_frames(frames, name: str = "frames") -> np.ndarray:
    """Validate a [T, H, W, 3] float frame stack with values in [0, 1]."""
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise InputError(f"{name} must have shape [T, H, W, 3], got {arr.shape}")
    if arr.shape[0] < 1:
        raise InputError(f"{name} must contain at least one frame")
    if not np.isfinite(arr).all():
        raise InputError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InputError(f"{name} values must lie in [0, 1], got range "
                         f"[{arr.min():.4g}, {arr.max():.4g}]")
    return arr


def check_mask(mask, name: str = "mask") -> np.ndarray:
    """Validate a binary [H, W] mask; returns a float64 array of {0, 1}."""
    arr = np.asarray(mask, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"{name} must have shape [H, W], got {arr.shape}")
    values = np.unique(arr)
    if not np.isin(values, (0.0, 1.0)).all():
        raise InputError(f"{name} must be binary (0/1), found values {values[:8]}")
    return arr


def check_points(points, name: str = "points") -> np.ndarray:
    """Validate an [N, 3] landmark array; x, y must lie in [0, 1], z finite."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InputError(f"{name} must have shape [N, 3], got {arr.shape}")
    if not np.isfinite(arr).all():
        raise InputError(f"{name} contains non-finite values")
    xy = arr[:, :2]
    if arr.shape[0] and (xy.min() < 0.0 or xy.max() > 1.0):
        raise InputError(f"{name} x/y coordinates must lie in [0, 1]")
    return arr


def check_index(index: int, size: int, name: str = "index") -> int:
    index = int(index)
    if not 0 <= index < size:
        raise InputError(f"{name} {index} out of range [0, {size})")
    return index
