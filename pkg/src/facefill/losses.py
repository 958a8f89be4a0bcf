"""The six-term training objective and its pluggable scorers.

Terms: Wasserstein adversarial, expression-recognition, style (Gram), deep
feature, L1 reconstruction, and the dense landmark penalty (which lives in
:mod:`facefill.landmarks`). Perceptual and expression scorers are interfaces;
the bundled deterministic stubs keep tests hermetic, and real networks can be
attached as TorchScript modules via file path or environment variable.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, replace

import numpy as np
import torch
import torch.nn.functional as F

from .validation import InputError

EXPRESSION_CLASSES = ("surprise", "angry", "sad", "contempt", "disgust",
                      "fear", "neutral", "happy")

VGG_EXTRACTOR_ENV = "FACEFILL_VGG_EXTRACTOR"
FER_SCORER_ENV = "FACEFILL_FER_SCORER"


class LossComputationError(RuntimeError):
    """A loss term came out non-finite; training must halt loudly."""


@dataclass(frozen=True)
class LossWeights:
    """The six scaling factors of the total objective."""

    adv: float = 1.0
    fer: float = 2.0
    style: float = 10.0
    vgg: float = 1.0
    recon: float = 1.0
    dense_lm: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise InputError(f"loss weight {name} must be nonnegative")

    def for_pretraining(self) -> "LossWeights":
        """Stage-1 weights: the adversarial term switched off."""
        return replace(self, adv=0.0)

    def as_dict(self) -> dict:
        return asdict(self)


TERM_NAMES = tuple(LossWeights.__dataclass_fields__)


@dataclass
class LossReport:
    """Per-term values plus the weighted total; total keeps tensor-ness so a
    training step can backpropagate through it."""

    terms: dict
    weights: LossWeights
    total: object

    def as_floats(self) -> dict:
        def scalar(v):
            return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        out = {name: scalar(value) for name, value in self.terms.items()}
        out["total"] = scalar(self.total)
        return out


def total_loss(terms: dict, weights: LossWeights) -> LossReport:
    """Weighted sum of the six terms. Every term must be present and finite."""
    missing = [name for name in TERM_NAMES if name not in terms]
    if missing:
        raise LossComputationError(f"missing loss terms: {missing}")
    for name in TERM_NAMES:
        raw = terms[name]
        value = float(raw.detach()) if isinstance(raw, torch.Tensor) else float(raw)
        if not np.isfinite(value):
            raise LossComputationError(f"loss term {name} is {value}")
    total = None
    for name in TERM_NAMES:
        contribution = getattr(weights, name) * terms[name]
        total = contribution if total is None else total + contribution
    return LossReport(terms=dict(terms), weights=weights, total=total)


def _to_tchw(x, dtype=None) -> torch.Tensor:
    """Accept VideoClip / [T, H, W, 3] numpy / [T, C, H, W] tensor."""
    frames = getattr(x, "frames", x)
    if isinstance(frames, torch.Tensor):
        return frames if dtype is None else frames.to(dtype)
    arr = torch.as_tensor(np.asarray(frames, dtype=np.float64))
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise InputError(f"expected [T, H, W, 3] frames, got {tuple(arr.shape)}")
    arr = arr.permute(0, 3, 1, 2)
    return arr if dtype is None else arr.to(dtype)


def recon_loss(pred, gt) -> torch.Tensor:
    """Mean absolute error over all elements."""
    p, g = _to_tchw(pred), _to_tchw(gt)
    if p.shape != g.shape:
        raise InputError(f"shape mismatch {tuple(p.shape)} vs {tuple(g.shape)}")
    return (p - g.to(p.dtype)).abs().mean()


# --- perceptual terms ---------------------------------------------------------

class FeatureExtractor:
    """Maps [T, 3, H, W] frames to a list of layer-tagged feature maps.

    Implementations must be deterministic and fixed (never trained here).
    """

    def __call__(self, frames: torch.Tensor) -> list:
        raise NotImplementedError


class PyramidFeatureExtractor(FeatureExtractor):
    """Hermetic stub: raw pixels average-pooled at four scales."""

    def __init__(self, scales=(1, 2, 4, 8)):
        self.scales = tuple(scales)

    def __call__(self, frames: torch.Tensor) -> list:
        return [frames if s == 1 else F.avg_pool2d(frames, s) for s in self.scales]


class IdentityFeatureExtractor(FeatureExtractor):
    """Single-layer passthrough; reduces vgg_loss to recon_loss."""

    def __call__(self, frames: torch.Tensor) -> list:
        return [frames]


class TorchScriptFeatureExtractor(FeatureExtractor):
    """Real perceptual network attached from a TorchScript checkpoint that
    returns a list/tuple of feature maps."""

    def __init__(self, path):
        self.module = torch.jit.load(str(path)).eval()
        for p in self.module.parameters():
            p.requires_grad_(False)

    def __call__(self, frames: torch.Tensor) -> list:
        return list(self.module(frames))


def vgg_loss(pred, gt, extractor: FeatureExtractor) -> torch.Tensor:
    """Mean absolute feature difference, averaged over tagged layers."""
    p, g = _to_tchw(pred), _to_tchw(gt)
    layers_p, layers_g = extractor(p), extractor(g.to(p.dtype))
    diffs = [(a - b).abs().mean() for a, b in zip(layers_p, layers_g)]
    return torch.stack(diffs).mean()


def gram_matrix(features: torch.Tensor) -> torch.Tensor:
    """Per-frame channel inner products normalized by layer size."""
    t, c, h, w = features.shape
    flat = features.reshape(t, c, h * w)
    return flat @ flat.transpose(1, 2) / (c * h * w)


def style_loss(pred, gt, extractor: FeatureExtractor) -> torch.Tensor:
    """Mean absolute Gram-matrix difference, averaged over tagged layers."""
    p, g = _to_tchw(pred), _to_tchw(gt)
    layers_p, layers_g = extractor(p), extractor(g.to(p.dtype))
    diffs = [(gram_matrix(a) - gram_matrix(b)).abs().mean()
             for a, b in zip(layers_p, layers_g)]
    return torch.stack(diffs).mean()


# --- adversarial terms ---------------------------------------------------------

def adv_losses(real_scores: torch.Tensor, fake_scores: torch.Tensor):
    """Wasserstein objective: ``disc = mean(fake) - mean(real)``,
    ``gen = -mean(fake)``. Any gradient penalty is added by the caller."""
    disc = fake_scores.mean() - real_scores.mean()
    gen = -fake_scores.mean()
    return gen, disc


def gradient_penalty(critic, real: torch.Tensor, fake: torch.Tensor,
                     generator: torch.Generator | None = None) -> torch.Tensor:
    """Penalize critic gradient norms away from 1 at interpolated clips.

    ``critic`` maps a [T, 3, H, W] clip to scores; interpolation draws one
    coefficient per frame from ``generator`` for reproducibility.
    """
    t = real.shape[0]
    eps = torch.rand(t, 1, 1, 1, dtype=real.dtype, generator=generator)
    interp = (eps * real + (1.0 - eps) * fake.detach()).requires_grad_(True)
    scores = critic(interp)
    grads = torch.autograd.grad(scores.sum(), interp, create_graph=True)[0]
    norms = grads.reshape(t, -1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def clip_weights(module: torch.nn.Module, bound: float = 0.01) -> None:
    """Classic weight clipping, the fidelity alternative to the penalty."""
    with torch.no_grad():
        for p in module.parameters():
            p.clamp_(-bound, bound)


# --- expression term ------------------------------------------------------------

class ExpressionScorer:
    """Maps [T, 3, H, W] frames to a [T, 8] probability row per frame,
    class order fixed by EXPRESSION_CLASSES."""

    def __call__(self, frames: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError


class PrototypeExpressionScorer(ExpressionScorer):
    """Deterministic stub: a prototype classifier over pooled pixels.

    Class probabilities are a softmax over negative squared distances to 8
    fixed random anchors in pooled-feature space. Random anchors are well
    separated, so at the default gain the stub behaves like a trained
    classifier: essentially one-hot with exponentially flat gradients away
    from class boundaries, and the cross-entropy pull has a finite minimizer
    (the anchor) instead of dragging generated frames toward infinity.
    Differentiable in its input; never trained.
    """

    def __init__(self, seed: int = 0, pool: int = 8, gain: float = 10.0,
                 scale_invariant: bool = False):
        gen = torch.Generator().manual_seed(seed)
        self.pool = pool
        self.gain = gain
        self.scale_invariant = scale_invariant
        self.anchors = torch.rand(8, 3 * pool * pool, generator=gen,
                                  dtype=torch.float64)
        if scale_invariant:
            self.anchors = self.anchors / self.anchors.norm(dim=1, keepdim=True)

    def __call__(self, frames: torch.Tensor) -> torch.Tensor:
        pooled = F.adaptive_avg_pool2d(frames, self.pool).reshape(frames.shape[0], -1)
        if self.scale_invariant:
            pooled = pooled / (pooled.norm(dim=1, keepdim=True) + 1e-12)
        anchors = self.anchors.to(frames.dtype)
        sq_dist = ((pooled[:, None, :] - anchors[None, :, :]) ** 2).sum(dim=2)
        return torch.softmax(-self.gain * sq_dist, dim=1)


class ConstantExpressionScorer(ExpressionScorer):
    """Stub emitting one fixed probability row for every frame."""

    def __init__(self, probabilities):
        probs = torch.as_tensor(probabilities, dtype=torch.float64)
        if probs.shape != (8,) or probs.min() < 0 or abs(float(probs.sum()) - 1.0) > 1e-6:
            raise InputError("expression probabilities must be a length-8 "
                             "probability vector")
        self.probabilities = probs

    @classmethod
    def uniform(cls) -> "ConstantExpressionScorer":
        return cls(torch.full((8,), 1.0 / 8.0, dtype=torch.float64))

    def __call__(self, frames: torch.Tensor) -> torch.Tensor:
        return self.probabilities.to(frames.dtype).expand(frames.shape[0], -1)


class TorchScriptExpressionScorer(ExpressionScorer):
    def __init__(self, path):
        self.module = torch.jit.load(str(path)).eval()
        for p in self.module.parameters():
            p.requires_grad_(False)

    def __call__(self, frames: torch.Tensor) -> torch.Tensor:
        return self.module(frames)


def fer_loss(pred, gt, scorer: ExpressionScorer) -> torch.Tensor:
    """Cross-entropy of predicted-frame scores against the argmax one-hot
    label of the ground-truth frame, averaged over frames."""
    p, g = _to_tchw(pred), _to_tchw(gt)
    scores_pred = scorer(p)
    with torch.no_grad():
        labels = scorer(g.to(p.dtype)).argmax(dim=1)
    picked = scores_pred[torch.arange(p.shape[0]), labels]
    return -(picked.clamp_min(1e-12).log()).mean()


# --- scorer resolution -----------------------------------------------------------

def resolve_feature_extractor(name: str = "stub") -> FeatureExtractor:
    """'stub', 'identity', or a TorchScript path; env var wins when set."""
    name = os.environ.get(VGG_EXTRACTOR_ENV, name)
    if name == "stub":
        return PyramidFeatureExtractor()
    if name == "identity":
        return IdentityFeatureExtractor()
    return TorchScriptFeatureExtractor(name)


def resolve_expression_scorer(name: str = "stub") -> ExpressionScorer:
    """'stub', 'uniform', or a TorchScript path; env var wins when set."""
    name = os.environ.get(FER_SCORER_ENV, name)
    if name == "stub":
        return PrototypeExpressionScorer()
    if name == "uniform":
        return ConstantExpressionScorer.uniform()
    return TorchScriptExpressionScorer(name)
