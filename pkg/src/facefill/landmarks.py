"""Dense facial landmarks: containers, density configurations, rasterization,
the detector interface, and the robust landmark regression loss.

The full set has 478 points (x, y normalized to [0, 1], z a relative depth).
Named subsets step the density down: 216 points inside the canonical headset
region, the standard 68-point layout, a 20-point eyelid+eyebrow set, and a
minimal 10-point eyelid-only set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import torch

from .validation import InputError, check_points

FULL_LANDMARK_COUNT = 478

# Canonical index blocks of the 478-point layout. 0-67 mirrors the classic
# 68-point convention (jaw, brows, nose, eyes, mouth); eyelid arcs and iris
# centers follow; everything from FILL_START is dense face coverage.
JAW = tuple(range(0, 17))
BROW_LEFT = tuple(range(17, 22))
BROW_RIGHT = tuple(range(22, 27))
NOSE = tuple(range(27, 36))
EYE_LEFT = tuple(range(36, 42))
EYE_RIGHT = tuple(range(42, 48))
MOUTH = tuple(range(48, 68))
EYELID_LEFT = tuple(range(68, 73))
EYELID_RIGHT = tuple(range(73, 78))
EYE_CENTER_LEFT = 78
EYE_CENTER_RIGHT = 79
FILL_START = 80

_DENSE216_ASSET = "dense216.json"


@dataclass
class LandmarkSet:
    """An [N, 3] array of landmark points."""

    points: np.ndarray

    def __post_init__(self):
        self.points = check_points(self.points)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def translated(self, offset) -> "LandmarkSet":
        moved = self.points + np.asarray(offset, dtype=np.float64)[None, :]
        return LandmarkSet(moved)


@dataclass(frozen=True)
class LandmarkConfig:
    """A named, ordered subset of the 478 canonical indices."""

    name: str
    index_list: tuple

    def __post_init__(self):
        indices = tuple(int(i) for i in self.index_list)
        if any(i < 0 or i >= FULL_LANDMARK_COUNT for i in indices):
            raise InputError(f"config {self.name!r} has indices outside [0, 478)")
        if len(set(indices)) != len(indices):
            raise InputError(f"config {self.name!r} has duplicate indices")
        object.__setattr__(self, "index_list", indices)

    @property
    def count(self) -> int:
        return len(self.index_list)


def _load_dense216_indices() -> tuple:
    path = resources.files("facefill.assets") / _DENSE216_ASSET
    with path.open("r") as fh:
        return tuple(json.load(fh))


def get_config(name: str) -> LandmarkConfig:
    """Look up one of the named density configurations.

    ``dense216`` is the frozen list of canonical-layout indices that fall
    inside the canonical headset mask; the other names are fixed index blocks.
    """
    if name == "full478":
        return LandmarkConfig("full478", tuple(range(FULL_LANDMARK_COUNT)))
    if name == "dense216":
        return LandmarkConfig("dense216", _load_dense216_indices())
    if name == "standard68":
        return LandmarkConfig("standard68", JAW + BROW_LEFT + BROW_RIGHT + NOSE
                              + EYE_LEFT + EYE_RIGHT + MOUTH)
    if name == "focus20":
        return LandmarkConfig("focus20", BROW_LEFT + BROW_RIGHT
                              + EYELID_LEFT + EYELID_RIGHT)
    if name == "minimal10":
        return LandmarkConfig("minimal10", EYELID_LEFT + EYELID_RIGHT)
    raise InputError(f"unknown landmark config {name!r}; expected one of "
                     "full478, dense216, standard68, focus20, minimal10")

CONFIG_NAMES = ("dense216", "standard68", "focus20", "minimal10")


def load_config(path) -> LandmarkConfig:
    """Read a landmark configuration file: either a named configuration
    (``{"name": "standard68"}``) or an explicit ordered index list
    (``{"name": "custom", "indices": [...]}")."""
    data = json.loads(Path(path).read_text())
    if "indices" in data:
        return LandmarkConfig(data.get("name", "custom"),
                              tuple(data["indices"]))
    if "name" in data:
        return get_config(data["name"])
    raise InputError(f"{path} names neither a configuration nor an index list")


def subset(landmarks: LandmarkSet, config: LandmarkConfig) -> LandmarkSet:
    """Select ``config``'s indices from a full 478-point set, order preserved."""
    if landmarks.count != FULL_LANDMARK_COUNT:
        raise InputError(f"subset expects {FULL_LANDMARK_COUNT} points, "
                         f"got {landmarks.count}")
    return LandmarkSet(landmarks.points[list(config.index_list)])


def points_to_pixels(points: np.ndarray, height: int, width: int) -> np.ndarray:
    """Map normalized (x, y) to integer (row, col) pixel coordinates.

    A coordinate of exactly 1.0 lands on the last pixel.
    """
    pts = np.asarray(points, dtype=np.float64)
    cols = np.minimum((pts[:, 0] * width).astype(np.int64), width - 1)
    rows = np.minimum((pts[:, 1] * height).astype(np.int64), height - 1)
    return np.stack([rows, cols], axis=1)


def select_masked_region(landmarks: LandmarkSet, mask) -> LandmarkSet:
    """Keep only the points whose pixel position falls on mask == 1."""
    mask_arr = np.asarray(getattr(mask, "mask", mask), dtype=np.float64)
    height, width = mask_arr.shape
    if landmarks.count == 0:
        return LandmarkSet(landmarks.points.copy())
    pix = points_to_pixels(landmarks.points, height, width)
    inside = mask_arr[pix[:, 0], pix[:, 1]] > 0.5
    return LandmarkSet(landmarks.points[inside])


def masked_region_config(points: np.ndarray, mask, count: int = 216,
                         name: str = "dense216") -> LandmarkConfig:
    """Derive the in-mask density configuration from a canonical layout.

    Takes the first ``count`` indices (ascending) whose pixel position falls
    inside the mask. This is how the checked-in dense216 asset was produced.
    """
    mask_arr = np.asarray(getattr(mask, "mask", mask), dtype=np.float64)
    height, width = mask_arr.shape
    pix = points_to_pixels(np.asarray(points, dtype=np.float64), height, width)
    inside = np.nonzero(mask_arr[pix[:, 0], pix[:, 1]] > 0.5)[0]
    if inside.size < count:
        raise InputError(f"only {inside.size} layout points fall inside the "
                         f"mask; {count} required")
    return LandmarkConfig(name, tuple(int(i) for i in inside[:count]))


def rasterize(landmarks: LandmarkSet, height: int, width: int,
              radius: int = 1) -> np.ndarray:
    """Render landmarks into a single-channel [H, W, 1] map in [0, 1].

    Each point contributes a disc of value 1 (a single pixel when radius is
    0); overlaps clamp, so coincident points draw the same map as one.
    """
    if height < 1 or width < 1:
        raise InputError("rasterize needs height, width >= 1")
    if radius < 0:
        raise InputError("radius must be >= 0")
    out = np.zeros((height, width), dtype=np.float64)
    if landmarks.count == 0:
        return out[:, :, None]
    pix = points_to_pixels(landmarks.points, height, width)
    if radius == 0:
        out[pix[:, 0], pix[:, 1]] = 1.0
        return out[:, :, None]
    rr, cc = np.mgrid[0:height, 0:width]
    for row, col in pix:
        disc = (rr - row) ** 2 + (cc - col) ** 2 <= radius ** 2
        out[disc] = 1.0
    return out[:, :, None]


# --- robust landmark loss ---------------------------------------------------

@dataclass(frozen=True)
class HuberParams:
    """Threshold between the quadratic and linear regimes."""

    delta: float = 1.0

    def __post_init__(self):
        if self.delta <= 0:
            raise InputError("huber delta must be positive")


def huber(a, b, params: HuberParams = HuberParams()):
    """Quadratic-below-delta, linear-above-delta penalty of a - b.

    Tensor inputs stay tensors (differentiable); plain numbers come back as
    floats. Elementwise on arrays.
    """
    delta = params.delta
    if isinstance(a, torch.Tensor) or isinstance(b, torch.Tensor):
        a_t, b_t = torch.as_tensor(a), torch.as_tensor(b)
        diff = torch.abs(a_t - b_t)
        return torch.where(diff <= delta,
                           0.5 * diff * diff,
                           delta * diff - 0.5 * delta * delta)
    diff = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    out = np.where(diff <= delta, 0.5 * diff * diff,
                   delta * diff - 0.5 * delta * delta)
    return float(out) if out.ndim == 0 else out


def _as_point_array(landmarks):
    if isinstance(landmarks, LandmarkSet):
        return landmarks.points
    return landmarks


def dense_lm_loss(predicted, ground_truth,
                  params: HuberParams = HuberParams(),
                  include_z: bool = True):
    """Average per-landmark Huber penalty between two corresponding sets.

    The penalty is summed over a landmark's coordinates (z participation is
    gated by ``include_z``) and averaged over landmarks. Accepts LandmarkSet,
    numpy arrays, or torch tensors; tensor inputs keep the autograd graph.
    """
    pred = _as_point_array(predicted)
    gt = _as_point_array(ground_truth)
    if pred.shape != gt.shape:
        raise InputError(f"landmark sets must correspond: {pred.shape} vs {gt.shape}")
    if pred.shape[0] < 1:
        raise InputError("dense_lm_loss needs at least one landmark")
    coords = slice(None) if include_z else slice(0, 2)
    if isinstance(pred, torch.Tensor) or isinstance(gt, torch.Tensor):
        per_point = huber(torch.as_tensor(pred)[:, coords],
                          torch.as_tensor(gt)[:, coords], params).sum(dim=1)
        return per_point.mean()
    per_point = huber(np.asarray(pred, dtype=np.float64)[:, coords],
                      np.asarray(gt, dtype=np.float64)[:, coords], params).sum(axis=1)
    return float(per_point.mean())


# --- detector interface ------------------------------------------------------

class LandmarkDetector:
    """Source of full 478-point landmark sets for individual frames.

    ``detect`` returns None when no face is found; it never raises for that.
    """

    def detect(self, frame: np.ndarray) -> LandmarkSet | None:
        raise NotImplementedError


class ConstantLandmarkDetector(LandmarkDetector):
    """Stub that returns the same set for every frame. Test plumbing."""

    def __init__(self, points: np.ndarray):
        self._set = LandmarkSet(np.asarray(points, dtype=np.float64))
        if self._set.count != FULL_LANDMARK_COUNT:
            raise InputError("detector stubs must produce 478 points")

    def detect(self, frame: np.ndarray) -> LandmarkSet | None:
        return LandmarkSet(self._set.points.copy())


class SyntheticLandmarkProvider(LandmarkDetector):
    """Analytic landmarks for frames produced by the synthetic face renderer.

    Holds the rendered frames and their exact analytic landmark arrays; a
    query frame is matched by pixel identity. Unknown frames report no face.
    """

    def __init__(self, frames: np.ndarray, landmarks: np.ndarray):
        frames = np.asarray(frames, dtype=np.float64)
        landmarks = np.asarray(landmarks, dtype=np.float64)
        if frames.shape[0] != landmarks.shape[0]:
            raise InputError("frame and landmark counts differ")
        if landmarks.shape[1] != FULL_LANDMARK_COUNT:
            raise InputError("synthetic provider expects 478-point landmark arrays")
        self._frames = frames
        self._landmarks = landmarks

    def detect(self, frame: np.ndarray) -> LandmarkSet | None:
        frame = np.asarray(frame, dtype=np.float64)
        for stored, points in zip(self._frames, self._landmarks):
            if stored.shape == frame.shape and np.array_equal(stored, frame):
                return LandmarkSet(points.copy())
        return None


# --- landmark files ----------------------------------------------------------

def save_landmarks(path, landmarks: np.ndarray) -> None:
    """Write per-frame landmark records as JSON lines."""
    landmarks = np.asarray(landmarks, dtype=np.float64)
    if landmarks.ndim != 3 or landmarks.shape[2] != 3:
        raise InputError(f"expected [T, N, 3] landmarks, got {landmarks.shape}")
    path = Path(path)
    with path.open("w") as fh:
        for t, pts in enumerate(landmarks):
            record = {"frame_index": t, "n": int(pts.shape[0]),
                      "points": [[float(v) for v in p] for p in pts]}
            fh.write(json.dumps(record) + "\n")


def load_landmarks(path) -> np.ndarray:
    """Read landmark records written by :func:`save_landmarks`."""
    path = Path(path)
    frames = []
    with path.open("r") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            pts = np.asarray(record["points"], dtype=np.float64)
            if pts.shape != (record["n"], 3):
                raise InputError(f"landmark record {record['frame_index']} is "
                                 f"inconsistent in {path}")
            frames.append(pts)
    if not frames:
        raise InputError(f"no landmark records in {path}")
    return np.stack(frames, axis=0)
