"""Disk formats: frame directories, mask images, and clip manifests.

Frames are written as zero-padded five-digit PNGs (``00000.png`` ...). Masks
are 8-bit PNGs where 255 marks the occluded region. A clip manifest is a JSON
file tying frames, mask, landmarks, and the reference index together.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from ..landmarks import load_landmarks, save_landmarks
from .clip import ClipSample, OcclusionMask, VideoClip, prepare_reference


class ClipIOError(RuntimeError):
    """Raised for missing, inconsistent, or malformed clip files."""


def save_clip(clip: VideoClip, directory) -> list:
    """Write frames as 8-bit PNGs; returns the written paths in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(clip.frame_count):
        data = np.round(clip.frames[t] * 255.0).astype(np.uint8)
        path = directory / f"{t:05d}.png"
        Image.fromarray(data, mode="RGB").save(path)
        paths.append(path)
    return paths


def load_clip(directory) -> VideoClip:
    """Read a lexicographically ordered PNG frame directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ClipIOError(f"{directory} is not a directory")
    paths = sorted(directory.glob("*.png"))
    if not paths:
        raise ClipIOError(f"no frames found in {directory}")
    frames = []
    shape = None
    for path in paths:
        arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise ClipIOError(f"frame {path.name} has shape {arr.shape}, "
                              f"expected {shape}")
        frames.append(arr)
    return VideoClip(np.stack(frames, axis=0))


def save_mask(mask: OcclusionMask, path) -> None:
    data = (mask.mask * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(Path(path))


def load_mask(path) -> OcclusionMask:
    path = Path(path)
    if not path.exists():
        raise ClipIOError(f"mask file {path} does not exist")
    arr = np.asarray(Image.open(path).convert("L"), dtype=np.float64)
    return OcclusionMask((arr >= 128.0).astype(np.float64))


def save_sample(sample: ClipSample, directory) -> Path:
    """Lay one sample out on disk and return its manifest path."""
    directory = Path(directory)
    frames_dir = directory / "frames"
    frame_paths = save_clip(sample.clip, frames_dir)
    save_mask(sample.mask, directory / "mask.png")
    manifest = {
        "frames": [p.name for p in frame_paths],
        "mask": "mask.png",
        "reference_index": sample.reference.source_index,
        "name": sample.name,
    }
    if sample.landmarks is not None:
        save_landmarks(directory / "landmarks.jsonl", sample.landmarks)
        manifest["landmarks"] = "landmarks.jsonl"
    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


def load_sample(directory) -> ClipSample:
    """Load a sample written by :func:`save_sample`."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise ClipIOError(f"no manifest.json in {directory}")
    manifest = json.loads(manifest_path.read_text())
    clip = load_clip(directory / "frames")
    expected = manifest.get("frames", [])
    if expected and len(expected) != clip.frame_count:
        raise ClipIOError(f"manifest lists {len(expected)} frames but "
                          f"{clip.frame_count} were loaded from {directory}")
    mask = load_mask(directory / manifest["mask"])
    landmarks = None
    if "landmarks" in manifest:
        landmarks = load_landmarks(directory / manifest["landmarks"])
        if landmarks.shape[0] != clip.frame_count:
            raise ClipIOError("landmark records do not cover every frame")
    reference_index = int(manifest.get("reference_index", 0))
    reference = prepare_reference(clip, mask, reference_index)
    return ClipSample(clip=clip, mask=mask, reference=reference,
                      landmarks=landmarks, name=manifest.get("name", directory.name))


def save_dataset(samples, root) -> list:
    root = Path(root)
    return [save_sample(s, root / s.name) for s in samples]


def load_dataset(root) -> list:
    """Load every sample directory (one manifest each) under ``root``."""
    root = Path(root)
    if not root.is_dir():
        raise ClipIOError(f"{root} is not a directory")
    dirs = sorted(p for p in root.iterdir() if (p / "manifest.json").exists())
    if not dirs:
        raise ClipIOError(f"no clip manifests under {root}")
    return [load_sample(d) for d in dirs]
