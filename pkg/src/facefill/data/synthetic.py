"""Parametric cartoon-face clips with analytically known landmarks.

The renderer and the landmark layout share one set of formulas, so every
returned landmark sits exactly on the feature it annotates. Faces are built
from ellipses and capsule strokes: head, brows, eyes with iris, nose, mouth.
Per-frame motion (head sway, blink, brow raise, mouth open) follows sinusoidal
phases; zero amplitudes give a static clip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..validation import InputError
from .. import landmarks as lm
from .clip import ClipSample, VideoClip, headset_mask, prepare_reference

_DEG = math.pi / 180.0


@dataclass(frozen=True)
class SyntheticFaceSpec:
    """Geometry, color, and motion parameters of one synthetic face.

    All geometry is in normalized image coordinates (x right, y down). The
    defaults keep every feature inside the unit square for the motion
    amplitudes below.
    """

    center: tuple = (0.5, 0.52)
    face_radii: tuple = (0.34, 0.44)
    eye_offset_x: float = 0.135
    eye_y: float = 0.40
    eye_radii: tuple = (0.065, 0.038)
    iris_radius: float = 0.028
    brow_y: float = 0.315
    brow_half_width: float = 0.085
    brow_lift: float = 0.02
    brow_thickness: float = 0.012
    nose_top_y: float = 0.44
    nose_tip_y: float = 0.575
    nose_base_y: float = 0.60
    nose_half_width: float = 0.045
    mouth_center_y: float = 0.74
    mouth_radii: tuple = (0.105, 0.035)

    sway_amplitude: float = 0.012
    bob_amplitude: float = 0.008
    blink_amplitude: float = 0.55
    brow_raise_amplitude: float = 0.012
    mouth_amplitude: float = 0.35
    sway_cycles: float = 1.0
    blink_cycles: float = 2.0
    brow_cycles: float = 1.0
    mouth_cycles: float = 1.5

    colors: dict = field(default_factory=lambda: {
        "background": (0.82, 0.86, 0.90),
        "skin": (0.87, 0.72, 0.60),
        "brow": (0.25, 0.16, 0.10),
        "sclera": (0.97, 0.97, 0.96),
        "iris": (0.16, 0.28, 0.55),
        "nose": (0.72, 0.54, 0.44),
        "mouth": (0.75, 0.30, 0.30),
    })

    def __post_init__(self):
        cx, cy = self.center
        rx, ry = self.face_radii
        margin_x = rx + self.sway_amplitude
        margin_y = ry + self.bob_amplitude
        if not (0.0 <= cx - margin_x and cx + margin_x <= 1.0
                and 0.0 <= cy - margin_y and cy + margin_y <= 1.0):
            raise InputError("face geometry plus motion leaves the unit square")

    def static(self) -> "SyntheticFaceSpec":
        """Copy with all motion amplitudes set to zero."""
        return replace(self, sway_amplitude=0.0, bob_amplitude=0.0,
                       blink_amplitude=0.0, brow_raise_amplitude=0.0,
                       mouth_amplitude=0.0)


@dataclass(frozen=True)
class _FramePose:
    """Resolved per-frame motion parameters."""

    offset: tuple
    eye_open: float      # vertical eye scale in (0, 1]
    brow_shift: float    # negative = raised
    mouth_scale: float   # vertical mouth scale


def _frame_pose(spec: SyntheticFaceSpec, t: int, frame_count: int,
                phases: np.ndarray) -> _FramePose:
    u = t / max(frame_count, 1)
    two_pi = 2.0 * math.pi
    off_x = spec.sway_amplitude * math.sin(two_pi * spec.sway_cycles * u + phases[0])
    off_y = spec.bob_amplitude * math.cos(two_pi * spec.sway_cycles * u + phases[1])
    blink = 0.5 * (1.0 + math.sin(two_pi * spec.blink_cycles * u + phases[2]))
    eye_open = max(0.15, 1.0 - spec.blink_amplitude * blink)
    brow = 0.5 * (1.0 + math.sin(two_pi * spec.brow_cycles * u + phases[3]))
    brow_shift = -spec.brow_raise_amplitude * brow
    mouth = math.sin(two_pi * spec.mouth_cycles * u + phases[4])
    mouth_scale = 1.0 + spec.mouth_amplitude * mouth
    return _FramePose((off_x, off_y), eye_open, brow_shift, mouth_scale)


def _fill_grid() -> np.ndarray:
    """Dense coverage points of the canonical layout, relative to a face
    centered at (0.5, 0.52). Band block first so the headset region is rich."""
    blocks = []
    for xs, ys in (
        (np.linspace(0.22, 0.78, 16), np.linspace(0.27, 0.53, 15)),   # eye band
        (np.linspace(0.30, 0.70, 10), np.linspace(0.13, 0.23, 6)),    # forehead
        (np.linspace(0.28, 0.72, 14), np.linspace(0.58, 0.88, 7)),    # lower face
    ):
        gx, gy = np.meshgrid(xs, ys)
        blocks.append(np.stack([gx.ravel(), gy.ravel()], axis=1))
    grid = np.concatenate(blocks, axis=0)
    assert grid.shape[0] == lm.FULL_LANDMARK_COUNT - lm.FILL_START
    return grid - np.array([0.5, 0.52])


_FILL_RELATIVE = _fill_grid()


def face_landmarks(spec: SyntheticFaceSpec, pose: _FramePose) -> np.ndarray:
    """The full 478-point layout for one frame, [478, 3]."""
    cx = spec.center[0] + pose.offset[0]
    cy = spec.center[1] + pose.offset[1]
    base_dx = spec.center[0] - 0.5
    base_dy = spec.center[1] - 0.52
    face_rx, face_ry = spec.face_radii
    eye_rx, eye_ry = spec.eye_radii
    eye_ry_t = eye_ry * pose.eye_open
    pts = np.zeros((lm.FULL_LANDMARK_COUNT, 2), dtype=np.float64)

    theta = (170.0 - 10.0 * np.arange(17)) * _DEG
    pts[list(lm.JAW), 0] = cx + face_rx * np.cos(theta)
    pts[list(lm.JAW), 1] = cy + face_ry * np.sin(theta)

    s = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    brow_y = spec.brow_y + pose.offset[1] + base_dy + pose.brow_shift
    for block, sign in ((lm.BROW_LEFT, -1.0), (lm.BROW_RIGHT, 1.0)):
        bx = 0.5 + base_dx + sign * spec.eye_offset_x + pose.offset[0]
        pts[list(block), 0] = bx + s * spec.brow_half_width
        pts[list(block), 1] = brow_y - spec.brow_lift * (1.0 - s ** 2)

    nose_x = cx
    bridge_y = np.linspace(spec.nose_top_y, spec.nose_tip_y, 4) + pose.offset[1] + base_dy
    pts[list(lm.NOSE[:4]), 0] = nose_x
    pts[list(lm.NOSE[:4]), 1] = bridge_y
    pts[list(lm.NOSE[4:]), 0] = nose_x + s * spec.nose_half_width
    pts[list(lm.NOSE[4:]), 1] = spec.nose_base_y + pose.offset[1] + base_dy

    eye_y = spec.eye_y + pose.offset[1] + base_dy
    eye_angles = np.array([180.0, 120.0, 60.0, 0.0, 300.0, 240.0]) * _DEG
    for block, lid_block, center_idx, sign in (
            (lm.EYE_LEFT, lm.EYELID_LEFT, lm.EYE_CENTER_LEFT, -1.0),
            (lm.EYE_RIGHT, lm.EYELID_RIGHT, lm.EYE_CENTER_RIGHT, 1.0)):
        ex = 0.5 + base_dx + sign * spec.eye_offset_x + pose.offset[0]
        pts[list(block), 0] = ex + eye_rx * np.cos(eye_angles)
        pts[list(block), 1] = eye_y - eye_ry_t * np.sin(eye_angles)
        pts[list(lid_block), 0] = ex + s * eye_rx
        pts[list(lid_block), 1] = eye_y - eye_ry_t * np.sqrt(1.0 - s ** 2)
        pts[center_idx] = (ex, eye_y)

    mouth_angles = 2.0 * math.pi * np.arange(20) / 20.0
    mouth_y = spec.mouth_center_y + pose.offset[1] + base_dy
    mouth_ry = spec.mouth_radii[1] * pose.mouth_scale
    pts[list(lm.MOUTH), 0] = cx + spec.mouth_radii[0] * np.cos(mouth_angles)
    pts[list(lm.MOUTH), 1] = mouth_y + mouth_ry * np.sin(mouth_angles)

    pts[lm.FILL_START:] = _FILL_RELATIVE + np.array([cx, cy])

    # Relative depth from an inflated head ellipsoid; rigid with the head.
    local_x = (pts[:, 0] - cx) / (face_rx * 1.12)
    local_y = (pts[:, 1] - cy) / (face_ry * 1.12)
    bulge = np.clip(1.0 - local_x ** 2 - local_y ** 2, 0.0, None)
    z = -0.25 * np.sqrt(bulge)
    return np.concatenate([pts, z[:, None]], axis=1)


def _pixel_grid(height: int, width: int):
    ys = (np.arange(height) + 0.5) / height
    xs = (np.arange(width) + 0.5) / width
    return np.meshgrid(xs, ys)


def _ellipse_mask(X, Y, center, radii):
    return ((X - center[0]) / radii[0]) ** 2 + ((Y - center[1]) / radii[1]) ** 2 <= 1.0


def _polyline_mask(X, Y, points, thickness):
    """Pixels within ``thickness`` of any segment of the polyline."""
    out = np.zeros(X.shape, dtype=bool)
    for p0, p1 in zip(points[:-1], points[1:]):
        dx, dy = p1[0] - p0[0], p1[1] - p0[1]
        norm_sq = dx * dx + dy * dy
        if norm_sq == 0.0:
            dist_sq = (X - p0[0]) ** 2 + (Y - p0[1]) ** 2
        else:
            t = np.clip(((X - p0[0]) * dx + (Y - p0[1]) * dy) / norm_sq, 0.0, 1.0)
            dist_sq = (X - (p0[0] + t * dx)) ** 2 + (Y - (p0[1] + t * dy)) ** 2
        out |= dist_sq <= thickness ** 2
    return out


def render_face(spec: SyntheticFaceSpec, pose: _FramePose,
                height: int, width: int) -> np.ndarray:
    """Rasterize one [H, W, 3] frame consistent with :func:`face_landmarks`."""
    X, Y = _pixel_grid(height, width)
    colors = spec.colors
    frame = np.empty((height, width, 3), dtype=np.float64)
    frame[:] = colors["background"]

    points = face_landmarks(spec, pose)
    cx = spec.center[0] + pose.offset[0]
    cy = spec.center[1] + pose.offset[1]

    def paint(mask, color):
        frame[mask] = color

    paint(_ellipse_mask(X, Y, (cx, cy), spec.face_radii), colors["skin"])

    for block in (lm.BROW_LEFT, lm.BROW_RIGHT):
        paint(_polyline_mask(X, Y, points[list(block), :2], spec.brow_thickness),
              colors["brow"])

    bridge = points[list(lm.NOSE[:4]), :2]
    base = points[list(lm.NOSE[4:]), :2]
    paint(_polyline_mask(X, Y, bridge, 0.008), colors["nose"])
    paint(_polyline_mask(X, Y, base, 0.006), colors["nose"])

    eye_ry_t = spec.eye_radii[1] * pose.eye_open
    for center_idx in (lm.EYE_CENTER_LEFT, lm.EYE_CENTER_RIGHT):
        center = tuple(points[center_idx, :2])
        sclera = _ellipse_mask(X, Y, center, (spec.eye_radii[0], eye_ry_t))
        paint(sclera, colors["sclera"])
        iris = _ellipse_mask(X, Y, center, (spec.iris_radius, spec.iris_radius))
        paint(iris & sclera, colors["iris"])

    mouth_center = (cx, spec.mouth_center_y + pose.offset[1]
                    + spec.center[1] - 0.52)
    mouth_ry = spec.mouth_radii[1] * pose.mouth_scale
    paint(_ellipse_mask(X, Y, mouth_center, (spec.mouth_radii[0], mouth_ry)),
          colors["mouth"])
    return np.clip(frame, 0.0, 1.0)


def generate_synthetic_clip(spec: SyntheticFaceSpec, frame_count: int, seed: int,
                            height: int = 128, width: int = 128):
    """Render a clip and its exact per-frame landmarks.

    Returns ``(VideoClip, landmarks)`` where landmarks is [T, 478, 3]. The
    seed fixes the motion phases, so identical (spec, seed) pairs reproduce
    the clip bit for bit.
    """
    if frame_count < 1:
        raise InputError("frame_count must be >= 1")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=5)
    frames = np.empty((frame_count, height, width, 3), dtype=np.float64)
    points = np.empty((frame_count, lm.FULL_LANDMARK_COUNT, 3), dtype=np.float64)
    for t in range(frame_count):
        pose = _frame_pose(spec, t, frame_count, phases)
        frames[t] = render_face(spec, pose, height, width)
        points[t] = face_landmarks(spec, pose)
    return VideoClip(frames), points


def jittered_spec(rng: np.random.Generator) -> SyntheticFaceSpec:
    """A spec with seeded per-identity variation in geometry and palette."""
    base = SyntheticFaceSpec()
    colors = {name: tuple(np.clip(np.asarray(c) + rng.uniform(-0.05, 0.05, 3),
                                  0.0, 1.0))
              for name, c in base.colors.items()}
    return replace(
        base,
        eye_offset_x=float(base.eye_offset_x + rng.uniform(-0.01, 0.01)),
        eye_radii=(float(base.eye_radii[0] + rng.uniform(-0.006, 0.006)),
                   float(base.eye_radii[1] + rng.uniform(-0.004, 0.004))),
        mouth_radii=(float(base.mouth_radii[0] + rng.uniform(-0.01, 0.01)),
                     base.mouth_radii[1]),
        brow_y=float(base.brow_y + rng.uniform(-0.008, 0.008)),
        colors=colors,
    )


def synthetic_dataset(n_clips: int, frame_count: int, height: int, width: int,
                      seed: int) -> list:
    """Build ClipSamples with headset masks, references, and landmarks."""
    rng = np.random.default_rng(seed)
    mask = headset_mask(height, width)
    samples = []
    for i in range(n_clips):
        spec = jittered_spec(rng)
        clip_seed = int(rng.integers(0, 2 ** 31 - 1))
        clip, points = generate_synthetic_clip(spec, frame_count, clip_seed,
                                               height, width)
        reference = prepare_reference(clip, mask, 0)
        samples.append(ClipSample(clip=clip, mask=mask, reference=reference,
                                  landmarks=points, name=f"clip{i:03d}",
                                  meta={"seed": clip_seed}))
    return samples
