"""Linear 3D morphable face model.

A mesh is ``pose ∘ (mean + identity_basis·id + expression_basis·exp)``; the
pose is a 3x4 affine (rotation·scale | translation). The bundled toy model is
a procedurally deformed ellipsoid head in normalized image coordinates, so
landmark vertices line up with the detector's coordinate frame; a real basis
can be loaded from the same asset format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.spatial import cKDTree

from .landmarks import FULL_LANDMARK_COUNT, LandmarkSet
from .validation import InputError

TOY_VERTEX_ROWS = 20
TOY_VERTEX_COLS = 61
TOY_K_ID = 20
TOY_K_EXP = 10


class MeshIOError(RuntimeError):
    """Raised for malformed or empty mesh files."""


@dataclass
class FaceMesh:
    """Reconstructed geometry: [V, 3] vertices and triangle indices."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise InputError(f"vertices must be [V, 3], got {self.vertices.shape}")
        if not np.isfinite(self.vertices).all():
            raise InputError("mesh vertices must be finite")
        if self.faces.size and (self.faces.min() < 0
                                or self.faces.max() >= len(self.vertices)):
            raise InputError("faces reference vertices outside the mesh")

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]


class MorphableModel:
    """Immutable linear face model with landmark vertex bindings."""

    def __init__(self, mean_shape, identity_basis, expression_basis,
                 faces, landmark_indices):
        self.mean_shape = torch.as_tensor(mean_shape, dtype=torch.float64)
        self.identity_basis = torch.as_tensor(identity_basis, dtype=torch.float64)
        self.expression_basis = torch.as_tensor(expression_basis, dtype=torch.float64)
        self.faces = np.asarray(faces, dtype=np.int64)
        self.landmark_indices = np.asarray(landmark_indices, dtype=np.int64)
        v = self.mean_shape.shape[0]
        if self.mean_shape.shape != (v, 3):
            raise InputError("mean_shape must be [V, 3]")
        if self.identity_basis.shape[:2] != (v, 3):
            raise InputError("identity_basis must be [V, 3, K_id]")
        if self.expression_basis.shape[:2] != (v, 3):
            raise InputError("expression_basis must be [V, 3, K_exp]")
        if self.faces.size and self.faces.max() >= v:
            raise InputError("triangle indices exceed vertex count")
        if self.landmark_indices.shape != (FULL_LANDMARK_COUNT,):
            raise InputError(f"landmark_indices must have length {FULL_LANDMARK_COUNT}")
        if self.landmark_indices.max() >= v or self.landmark_indices.min() < 0:
            raise InputError("landmark indices exceed vertex count")

    @property
    def vertex_count(self) -> int:
        return self.mean_shape.shape[0]

    @property
    def k_id(self) -> int:
        return self.identity_basis.shape[2]

    @property
    def k_exp(self) -> int:
        return self.expression_basis.shape[2]


@dataclass
class FaceParams:
    """Model coefficients: 3x4 affine pose plus identity/expression vectors."""

    pose: torch.Tensor
    id_coeffs: torch.Tensor
    exp_coeffs: torch.Tensor

    def __post_init__(self):
        self.pose = torch.as_tensor(self.pose, dtype=torch.float64)
        self.id_coeffs = torch.as_tensor(self.id_coeffs, dtype=torch.float64)
        self.exp_coeffs = torch.as_tensor(self.exp_coeffs, dtype=torch.float64)
        if self.pose.shape != (3, 4):
            raise InputError(f"pose must be a 3x4 affine, got {tuple(self.pose.shape)}")
        for name, t in (("pose", self.pose), ("id_coeffs", self.id_coeffs),
                        ("exp_coeffs", self.exp_coeffs)):
            if not torch.isfinite(t).all():
                raise InputError(f"{name} contains non-finite entries")

    @classmethod
    def identity(cls, model: MorphableModel) -> "FaceParams":
        pose = torch.eye(3, 4, dtype=torch.float64)
        return cls(pose, torch.zeros(model.k_id, dtype=torch.float64),
                   torch.zeros(model.k_exp, dtype=torch.float64))

    @classmethod
    def from_vector(cls, vector, k_id: int, k_exp: int) -> "FaceParams":
        vector = torch.as_tensor(vector, dtype=torch.float64).reshape(-1)
        if vector.numel() != 12 + k_id + k_exp:
            raise InputError(f"parameter vector must have {12 + k_id + k_exp} "
                             f"entries, got {vector.numel()}")
        return cls(vector[:12].reshape(3, 4),
                   vector[12:12 + k_id], vector[12 + k_id:])

    def vector(self) -> torch.Tensor:
        return torch.cat([self.pose.reshape(-1), self.id_coeffs, self.exp_coeffs])


def identity_pose() -> torch.Tensor:
    return torch.eye(3, 4, dtype=torch.float64)


def rigid_pose(yaw: float = 0.0, pitch: float = 0.0, roll: float = 0.0,
               translation=(0.0, 0.0, 0.0), scale: float = 1.0) -> torch.Tensor:
    """Build a 3x4 pose from Euler angles (radians), translation, and scale."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = torch.tensor([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]],
                      dtype=torch.float64)
    ry = torch.tensor([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]],
                      dtype=torch.float64)
    rx = torch.tensor([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]],
                      dtype=torch.float64)
    rotation = rz @ ry @ rx * scale
    t = torch.as_tensor(translation, dtype=torch.float64).reshape(3, 1)
    return torch.cat([rotation, t], dim=1)


def reconstruct_vertices(model: MorphableModel, pose: torch.Tensor,
                         id_coeffs: torch.Tensor,
                         exp_coeffs: torch.Tensor) -> torch.Tensor:
    """Differentiable core: coefficients to posed [V, 3] vertices."""
    if id_coeffs.shape[-1] != model.k_id:
        raise InputError(f"expected {model.k_id} identity coefficients, "
                         f"got {id_coeffs.shape[-1]}")
    if exp_coeffs.shape[-1] != model.k_exp:
        raise InputError(f"expected {model.k_exp} expression coefficients, "
                         f"got {exp_coeffs.shape[-1]}")
    shape = (model.mean_shape
             + torch.einsum("vck,k->vc", model.identity_basis, id_coeffs)
             + torch.einsum("vck,k->vc", model.expression_basis, exp_coeffs))
    return shape @ pose[:, :3].T + pose[:, 3]


def reconstruct_mesh(model: MorphableModel, params: FaceParams) -> FaceMesh:
    """Coefficients to a concrete mesh with the model's triangulation."""
    vertices = reconstruct_vertices(model, params.pose, params.id_coeffs,
                                    params.exp_coeffs)
    return FaceMesh(vertices.detach().numpy(), model.faces.copy())


def landmarks_from_vertices(model: MorphableModel,
                            vertices: torch.Tensor) -> torch.Tensor:
    """Differentiable landmark extraction: vertices at the bound indices."""
    idx = torch.as_tensor(model.landmark_indices, dtype=torch.long)
    return vertices[idx]


def mesh_landmarks(model: MorphableModel, mesh: FaceMesh) -> LandmarkSet:
    """Query the 478 landmark vertices of a reconstructed mesh."""
    if mesh.vertex_count != model.vertex_count:
        raise InputError("mesh does not belong to this model")
    return LandmarkSet(mesh.vertices[model.landmark_indices])


# --- toy model construction ---------------------------------------------------

def _smooth_field(points: np.ndarray, rng: np.random.Generator,
                  weight: np.ndarray) -> np.ndarray:
    """A smooth random [V, 3] displacement field over the surface."""
    field = np.zeros_like(points)
    for _ in range(4):
        freq = rng.uniform(1.5, 6.0, size=3)
        phase = rng.uniform(0.0, 2.0 * math.pi, size=3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        wave = np.sin(points @ freq + phase[0]) * np.cos(points @ freq[::-1].copy()
                                                         + phase[1])
        field += wave[:, None] * direction[None, :]
    return field * weight[:, None]


def build_toy_model(k_id: int = TOY_K_ID, k_exp: int = TOY_K_EXP,
                    seed: int = 0, layout_points: np.ndarray | None = None
                    ) -> MorphableModel:
    """Procedural deformed-ellipsoid head; 1220 vertices, unit-norm bases.

    Landmark vertex bindings come from nearest neighbors to the canonical
    landmark layout (the synthetic face at rest) unless explicit layout
    points are given.
    """
    rng = np.random.default_rng(seed)
    rows, cols = TOY_VERTEX_ROWS, TOY_VERTEX_COLS
    theta = math.pi * (np.arange(rows) + 0.5) / rows
    phi = 2.0 * math.pi * np.arange(cols) / cols
    theta_g, phi_g = np.meshgrid(theta, phi, indexing="ij")

    # Ellipsoid head in normalized image coordinates: x right, y down,
    # negative z toward the camera; front of the face is the phi ~ 3pi/2 band.
    bump = (1.0 + 0.05 * np.sin(3.0 * theta_g) * np.cos(2.0 * phi_g)
            + 0.03 * np.cos(5.0 * phi_g))
    x = 0.5 + 0.34 * np.sin(theta_g) * np.cos(phi_g) * bump
    y = 0.52 + 0.44 * np.cos(theta_g) * bump
    z = 0.25 * np.sin(theta_g) * np.sin(phi_g) * bump
    mean = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    faces = []
    for i in range(rows - 1):
        for j in range(cols):
            a = i * cols + j
            b = i * cols + (j + 1) % cols
            c = (i + 1) * cols + j
            d = (i + 1) * cols + (j + 1) % cols
            faces.append((a, b, c))
            faces.append((b, d, c))
    faces = np.asarray(faces, dtype=np.int64)

    face_weight = np.exp(-((mean[:, 2] - mean[:, 2].min()) / 0.25) ** 2)
    lower_weight = face_weight * np.exp(-((mean[:, 1] - 0.70) / 0.2) ** 2)

    def make_basis(k, weight):
        basis = np.empty((mean.shape[0], 3, k), dtype=np.float64)
        for i in range(k):
            column = _smooth_field(mean * 8.0, rng, weight)
            basis[:, :, i] = column / np.linalg.norm(column)
        return basis

    identity_basis = make_basis(k_id, face_weight)
    expression_basis = make_basis(k_exp, lower_weight)

    if layout_points is None:
        from .data.synthetic import SyntheticFaceSpec, face_landmarks, _frame_pose
        spec = SyntheticFaceSpec().static()
        layout_points = face_landmarks(spec, _frame_pose(spec, 0, 1, np.zeros(5)))
    tree = cKDTree(mean)
    _, landmark_indices = tree.query(np.asarray(layout_points, dtype=np.float64))

    return MorphableModel(mean, identity_basis, expression_basis, faces,
                          landmark_indices)


# --- disk formats --------------------------------------------------------------

def save_mesh(mesh: FaceMesh, path) -> None:
    """Write vertex/face records (OBJ layout, 6 decimal digits)."""
    if mesh.vertex_count == 0:
        raise MeshIOError("refusing to write an empty mesh")
    path = Path(path)
    with path.open("w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_mesh(path) -> FaceMesh:
    path = Path(path)
    if not path.exists():
        raise MeshIOError(f"mesh file {path} does not exist")
    vertices, faces = [], []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                vertices.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
        except (ValueError, IndexError) as exc:
            raise MeshIOError(f"{path}:{lineno}: malformed record {line!r}") from exc
    if not vertices:
        raise MeshIOError(f"{path} contains no vertices")
    return FaceMesh(np.asarray(vertices, dtype=np.float64),
                    np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def save_model(model: MorphableModel, path) -> None:
    """Persist a model as an npz archive with self-describing shapes."""
    np.savez(Path(path),
             mean_shape=model.mean_shape.numpy(),
             identity_basis=model.identity_basis.numpy(),
             expression_basis=model.expression_basis.numpy(),
             faces=model.faces, landmark_indices=model.landmark_indices)


def load_model(path) -> MorphableModel:
    path = Path(path)
    if not path.exists():
        raise MeshIOError(f"model asset {path} does not exist")
    with np.load(path) as data:
        return MorphableModel(data["mean_shape"], data["identity_basis"],
                              data["expression_basis"], data["faces"],
                              data["landmark_indices"])
