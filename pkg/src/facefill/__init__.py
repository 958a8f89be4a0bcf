"""facefill: occluded-face video inpainting with 3D geometry recovery.

A temporal-shift gated-convolution generator fills a static occlusion in face
video, guided by dense landmarks and a single reference frame; a morphable
face model regressor then recovers per-frame 3D geometry from the result.
"""

__version__ = "0.1.0"

from .estimator import FaceVideoInpainter

__all__ = ["FaceVideoInpainter", "__version__"]
