"""Two-stage geometry regression: image -> model coefficients -> mesh ->
landmarks, plus a residual landmark refiner and a landmark-to-coefficients
feedback network.

The image backbone is a small convolutional encoder with a linear head; the
pose part of the head is a delta on the identity affine, so a zero-initialized
head starts at the mean face. The refiner is residual with a zero-initialized
output layer (identity at init). Refiner and feedback network key each point
by a learned landmark identity, so any density configuration works as long as
slot indices accompany subset inputs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .landmarks import FULL_LANDMARK_COUNT, LandmarkSet
from .morphable import (
    FaceMesh,
    FaceParams,
    MorphableModel,
    landmarks_from_vertices,
    reconstruct_mesh,
    reconstruct_vertices,
)
from .validation import InputError


@dataclass
class GeomRegressorConfig:
    frame_size: int = 64
    base_channels: int = 16
    point_features: int = 48
    point_embed: int = 16
    param_embed: int = 32


def parameter_checksum(module: nn.Module) -> str:
    """Hex digest over all parameter bytes; used to verify freezes."""
    digest = hashlib.sha256()
    for name, p in sorted(module.named_parameters()):
        digest.update(name.encode())
        digest.update(p.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def _identity_affine(dtype=torch.float64) -> torch.Tensor:
    return torch.eye(3, 4, dtype=dtype).reshape(-1)


class GeomRegressor(nn.Module):
    """Bound to one morphable model; all heads emit its coefficient layout."""

    def __init__(self, model: MorphableModel,
                 config: GeomRegressorConfig | None = None):
        super().__init__()
        self.model = model
        self.config = config or GeomRegressorConfig()
        self.param_dim = 12 + model.k_id + model.k_exp
        c = self.config.base_channels

        blocks = []
        in_ch = 3
        for _ in range(4):
            blocks += [nn.Conv2d(in_ch, c, 3, stride=2, padding=1),
                       nn.LeakyReLU(0.2)]
            in_ch, c = c, c * 2
        self.encoder = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(in_ch, self.param_dim)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

        pf, pe = self.config.point_features, self.config.param_embed
        self.param_embed = nn.Sequential(nn.Linear(self.param_dim, pe),
                                         nn.LeakyReLU(0.2))
        # each landmark gets a learned identity so the refiner can address
        # points individually, plus a direct zero-init offset table
        self.point_embed = nn.Embedding(FULL_LANDMARK_COUNT,
                                        self.config.point_embed)
        self.point_offsets = nn.Parameter(
            torch.zeros(FULL_LANDMARK_COUNT, 3, dtype=torch.float64))
        self.refine_net = nn.Sequential(
            nn.Linear(3 + pe + self.config.point_embed, pf), nn.LeakyReLU(0.2),
            nn.Linear(pf, pf), nn.LeakyReLU(0.2),
            nn.Linear(pf, 3),
        )
        nn.init.zeros_(self.refine_net[-1].weight)
        nn.init.zeros_(self.refine_net[-1].bias)

        self.point_net = nn.Sequential(
            nn.Linear(3 + self.config.point_embed, pf), nn.LeakyReLU(0.2),
            nn.Linear(pf, pf), nn.LeakyReLU(0.2),
        )
        self.feedback_head = nn.Sequential(
            nn.Linear(pf, pf), nn.LeakyReLU(0.2),
            nn.Linear(pf, self.param_dim),
        )
        self.double()

    # --- tensor paths (differentiable) ----------------------------------

    def _check_frames(self, frames: torch.Tensor) -> torch.Tensor:
        size = self.config.frame_size
        if frames.ndim != 4 or frames.shape[1] != 3:
            raise InputError(f"expected [T, 3, H, W] frames, got "
                             f"{tuple(frames.shape)}")
        if frames.shape[2] != size or frames.shape[3] != size:
            raise InputError(f"regressor is configured for {size}x{size} "
                             f"frames, got {frames.shape[2]}x{frames.shape[3]}")
        return frames.to(torch.float64)

    def param_vectors(self, frames: torch.Tensor) -> torch.Tensor:
        """[T, 3, S, S] frames to [T, 12 + K_id + K_exp] coefficients."""
        frames = self._check_frames(frames)
        feats = self.pool(self.encoder(frames)).flatten(1)
        delta = self.head(feats)
        base = torch.zeros(self.param_dim, dtype=torch.float64)
        base[:12] = _identity_affine()
        return delta + base

    def refine_points(self, points: torch.Tensor, params: torch.Tensor,
                      indices: torch.Tensor | None = None) -> torch.Tensor:
        """Residual refinement of [N, 3] points conditioned on coefficients.

        ``indices`` names each point's canonical landmark slot (defaults to
        0..N-1), selecting its identity embedding and offset row.
        """
        n = points.shape[0]
        if indices is None:
            indices = torch.arange(n)
        embed = self.param_embed(params.reshape(-1))
        stacked = torch.cat([
            points,
            self.point_embed(indices).to(points.dtype),
            embed.unsqueeze(0).expand(n, -1),
        ], dim=1)
        return points + self.point_offsets[indices] + self.refine_net(stacked)

    def feedback_params(self, points: torch.Tensor,
                        indices: torch.Tensor | None = None) -> torch.Tensor:
        """Coefficients regressed back from refined [N, 3] landmarks.

        Point identity embeddings (selected by ``indices``, default 0..N-1)
        let the pooled representation weight landmarks individually.
        """
        if indices is None:
            indices = torch.arange(points.shape[0])
        stacked = torch.cat([points, self.point_embed(indices).to(points.dtype)],
                            dim=1)
        pooled = self.point_net(stacked).mean(dim=0)
        delta = self.feedback_head(pooled)
        base = torch.zeros(self.param_dim, dtype=torch.float64)
        base[:12] = _identity_affine()
        return delta + base

    def synergy_forward(self, frames: torch.Tensor,
                        landmark_indices=None) -> dict:
        """The full chain for one clip of frames.

        Returns per-frame lists keyed ``params`` (stage-1 vectors),
        ``landmarks`` (refined [N, 3]), and ``feedback`` (stage-2 vectors).
        ``landmark_indices`` restricts the loop to a density configuration.
        """
        vectors = self.param_vectors(frames)
        idx = None
        if landmark_indices is not None:
            idx = torch.as_tensor(np.asarray(landmark_indices), dtype=torch.long)
        full = torch.arange(len(self.model.landmark_indices))
        params_out, lm_out, feedback_out = [], [], []
        for t in range(vectors.shape[0]):
            vec = vectors[t]
            pose = vec[:12].reshape(3, 4)
            id_c = vec[12:12 + self.model.k_id]
            exp_c = vec[12 + self.model.k_id:]
            verts = reconstruct_vertices(self.model, pose, id_c, exp_c)
            points = landmarks_from_vertices(self.model, verts)
            refined = self.refine_points(points, vec, full)
            if idx is not None:
                refined = refined[idx]
            feedback_out.append(self.feedback_params(refined,
                                                     idx if idx is not None
                                                     else full))
            params_out.append(vec)
            lm_out.append(refined)
        return {"params": params_out, "landmarks": lm_out,
                "feedback": feedback_out}

    # --- object-level API -------------------------------------------------

    def _frame_tensor(self, frame) -> torch.Tensor:
        arr = np.asarray(getattr(frame, "pixels", frame), dtype=np.float64)
        if arr.ndim != 3 or arr.shape[-1] != 3:
            raise InputError(f"expected one [H, W, 3] frame, got {arr.shape}")
        return torch.as_tensor(arr).permute(2, 0, 1).unsqueeze(0)

    @torch.no_grad()
    def regress_params(self, frame) -> FaceParams:
        vec = self.param_vectors(self._frame_tensor(frame))[0]
        return FaceParams.from_vector(vec, self.model.k_id, self.model.k_exp)

    @torch.no_grad()
    def refine_landmarks(self, landmarks, params: FaceParams):
        points = landmarks.points if isinstance(landmarks, LandmarkSet) else landmarks
        refined = self.refine_points(torch.as_tensor(points, dtype=torch.float64),
                                     params.vector())
        out = refined.numpy()
        return LandmarkSet(out) if isinstance(landmarks, LandmarkSet) else out

    @torch.no_grad()
    def params_from_landmarks(self, landmarks) -> FaceParams:
        points = landmarks.points if isinstance(landmarks, LandmarkSet) else landmarks
        vec = self.feedback_params(torch.as_tensor(points, dtype=torch.float64))
        return FaceParams.from_vector(vec, self.model.k_id, self.model.k_exp)

    def reconstruct_from_frame(self, frame) -> FaceMesh:
        """Compose coefficient regression with mesh reconstruction."""
        return reconstruct_mesh(self.model, self.regress_params(frame))

    def set_frozen(self, frozen: bool) -> None:
        for p in self.parameters():
            p.requires_grad_(not frozen)
