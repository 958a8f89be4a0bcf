"""Image-quality metrics over frames and clips.

MSE, PSNR, and SSIM are computed natively. The distribution distance (FID)
and the learned perceptual distance (LPIPS) need external embedding networks,
so they take pluggable scorers; the bundled stubs are deterministic and keep
the test suite hermetic.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.linalg
import scipy.signal
import torch
import torch.nn.functional as F

from ..validation import InputError

FID_EMBEDDER_ENV = "FACEFILL_FID_EMBEDDER"
LPIPS_SCORER_ENV = "FACEFILL_LPIPS_SCORER"

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


def _frames_of(x) -> np.ndarray:
    arr = np.asarray(getattr(x, "frames", x), dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise InputError(f"expected [T, H, W, 3] frames, got {arr.shape}")
    return arr


def mse(pred, gt) -> float:
    p, g = _frames_of(pred), _frames_of(gt)
    if p.shape != g.shape:
        raise InputError(f"shape mismatch {p.shape} vs {g.shape}")
    return float(np.mean((p - g) ** 2))


def psnr(pred, gt) -> float:
    """10*log10(1/mse) in dB for unit-range values, capped at 100 dB."""
    err = mse(pred, gt)
    if err == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / err)))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    g = np.exp(-((np.arange(size) - (size - 1) / 2.0) ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _to_gray255(frame: np.ndarray) -> np.ndarray:
    return 255.0 * (0.299 * frame[..., 0] + 0.587 * frame[..., 1]
                    + 0.114 * frame[..., 2])


def _ssim_frame(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> float:
    corr = lambda a: scipy.signal.correlate2d(a, window, mode="valid")
    mu_x, mu_y = corr(x), corr(y)
    var_x = corr(x * x) - mu_x * mu_x
    var_y = corr(y * y) - mu_y * mu_y
    cov = corr(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


def ssim(pred, gt) -> float:
    """Mean local SSIM over valid 11x11 Gaussian windows, averaged over
    frames. Frames are converted to 255-scaled grayscale first."""
    p, g = _frames_of(pred), _frames_of(gt)
    if p.shape != g.shape:
        raise InputError(f"shape mismatch {p.shape} vs {g.shape}")
    if p.shape[1] < SSIM_WINDOW or p.shape[2] < SSIM_WINDOW:
        raise InputError(f"frames must be at least {SSIM_WINDOW}x{SSIM_WINDOW} "
                         "for SSIM")
    window = _gaussian_window()
    values = [_ssim_frame(_to_gray255(pf), _to_gray255(gf), window)
              for pf, gf in zip(p, g)]
    return float(np.mean(values))


# --- pluggable embedding metrics -------------------------------------------------

class FrameEmbedder:
    """Maps [N, H, W, 3] frames to [N, D] embedding vectors."""

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class RandomProjectionEmbedder(FrameEmbedder):
    """Deterministic stub: pooled pixels through a fixed random projection."""

    def __init__(self, dim: int = 16, pool: int = 8, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.pool = pool
        self.weight = rng.normal(size=(dim, 3 * pool * pool)) / np.sqrt(3 * pool * pool)

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        frames = _frames_of(frames)
        t = torch.as_tensor(frames).permute(0, 3, 1, 2)
        pooled = F.adaptive_avg_pool2d(t, self.pool).reshape(frames.shape[0], -1)
        return pooled.numpy() @ self.weight.T


class TorchScriptEmbedder(FrameEmbedder):
    def __init__(self, path):
        self.module = torch.jit.load(str(path)).eval()

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        t = torch.as_tensor(_frames_of(frames), dtype=torch.float32)
        with torch.no_grad():
            return self.module(t.permute(0, 3, 1, 2)).numpy().astype(np.float64)


def frechet_distance(mean1, cov1, mean2, cov2) -> float:
    """Distance between two Gaussians: ||m1-m2||^2 + tr(C1+C2-2(C1 C2)^1/2)."""
    mean1, mean2 = np.asarray(mean1), np.asarray(mean2)
    cov1, cov2 = np.atleast_2d(cov1), np.atleast_2d(cov2)
    covmean = scipy.linalg.sqrtm(cov1 @ cov2)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    diff = mean1 - mean2
    value = diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(covmean)
    return float(max(value, 0.0))


def fid_from_embeddings(pred_embeddings: np.ndarray,
                        gt_embeddings: np.ndarray) -> float:
    pred_embeddings = np.asarray(pred_embeddings, dtype=np.float64)
    gt_embeddings = np.asarray(gt_embeddings, dtype=np.float64)
    if pred_embeddings.shape[0] < 2 or gt_embeddings.shape[0] < 2:
        raise InputError("FID needs at least 2 samples per set")
    mu_p, mu_g = pred_embeddings.mean(axis=0), gt_embeddings.mean(axis=0)
    cov_p = np.cov(pred_embeddings, rowvar=False)
    cov_g = np.cov(gt_embeddings, rowvar=False)
    return frechet_distance(mu_p, cov_p, mu_g, cov_g)


def fid(pred_set, gt_set, embedder: FrameEmbedder) -> float:
    """Frechet distance between Gaussian fits of frame embeddings."""
    return fid_from_embeddings(embedder(_frames_of(pred_set)),
                               embedder(_frames_of(gt_set)))


class PairDistanceScorer:
    """Perceptual distance between two frames (lower is more similar)."""

    def __call__(self, a: np.ndarray, b: np.ndarray) -> float:
        raise NotImplementedError


class PyramidPairDistance(PairDistanceScorer):
    """Deterministic stub: mean absolute pooled-pixel difference at four
    scales. Exactly zero for identical frames."""

    def __init__(self, scales=(1, 2, 4, 8)):
        self.scales = tuple(scales)

    def __call__(self, a: np.ndarray, b: np.ndarray) -> float:
        ta = torch.as_tensor(np.asarray(a, dtype=np.float64)).permute(2, 0, 1)[None]
        tb = torch.as_tensor(np.asarray(b, dtype=np.float64)).permute(2, 0, 1)[None]
        diffs = [(ta - tb).abs().mean() if s == 1
                 else (F.avg_pool2d(ta, s) - F.avg_pool2d(tb, s)).abs().mean()
                 for s in self.scales]
        return float(torch.stack(diffs).mean())


class TorchScriptPairDistance(PairDistanceScorer):
    """Real perceptual metric attached from a TorchScript module mapping two
    [1, 3, H, W] frames to a scalar distance."""

    def __init__(self, path):
        self.module = torch.jit.load(str(path)).eval()

    def __call__(self, a: np.ndarray, b: np.ndarray) -> float:
        ta = torch.as_tensor(np.asarray(a), dtype=torch.float32
                             ).permute(2, 0, 1)[None]
        tb = torch.as_tensor(np.asarray(b), dtype=torch.float32
                             ).permute(2, 0, 1)[None]
        with torch.no_grad():
            return float(self.module(ta, tb))


def lpips(pred, gt, scorer: PairDistanceScorer) -> float:
    """Scorer distance averaged over corresponding frames."""
    p, g = _frames_of(pred), _frames_of(gt)
    if p.shape != g.shape:
        raise InputError(f"shape mismatch {p.shape} vs {g.shape}")
    return float(np.mean([scorer(pf, gf) for pf, gf in zip(p, g)]))


def resolve_embedder(name: str = "stub") -> FrameEmbedder:
    """'stub' or a TorchScript path; the env var wins when set."""
    name = os.environ.get(FID_EMBEDDER_ENV, name)
    if name == "stub":
        return RandomProjectionEmbedder()
    return TorchScriptEmbedder(name)


def resolve_pair_distance(name: str = "stub") -> PairDistanceScorer:
    """'stub' or a TorchScript path; the env var wins when set."""
    name = os.environ.get(LPIPS_SCORER_ENV, name)
    if name == "stub":
        return PyramidPairDistance()
    return TorchScriptPairDistance(name)
