"""Scikit-learn style front door to the whole pipeline.

``fit`` runs the two-stage training on a list of clip samples, ``transform``
inpaints clips with the fitted generator, and ``predict`` reconstructs
per-frame 3D geometry from the inpainted output. Hyperparameters follow the
estimator convention (stored verbatim, ``get_params``/``set_params``/clone
compatible); fitted state lives in trailing-underscore attributes.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .data.clip import ClipSample
from .losses import LossWeights
from .pipeline import TrainedBundle, infer, load_bundle
from .training import TrainConfig, Trainer
from .validation import InputError


def _check_samples(X) -> list:
    if isinstance(X, ClipSample):
        X = [X]
    samples = list(X)
    if not samples:
        raise InputError("expected at least one ClipSample")
    for item in samples:
        if not isinstance(item, ClipSample):
            raise InputError(f"expected ClipSample items, got {type(item).__name__}")
        if item.landmarks is None:
            raise InputError(f"sample {item.name} carries no landmarks")
    return samples


class FaceVideoInpainter(TransformerMixin, BaseEstimator):
    """Occluded-face video inpainting with geometry recovery.

    Parameters mirror the training configuration; ``work_dir`` is where run
    artifacts (loss log, checkpoints, manifest) are written, a temporary
    directory when omitted.
    """

    def __init__(self, frame_size=64, clip_len=8, base_channels=16,
                 landmark_config="dense216", stage1_epochs=60,
                 stage2_epochs=40, geometry_warmup_epochs=30,
                 learning_rate=1e-3, lr_schedule="constant", huber_delta=1.0,
                 gp_weight=10.0, masked_fill="zero",
                 attention_placement="downsample", loss_weights=None,
                 seed=0, work_dir=None):
        self.frame_size = frame_size
        self.clip_len = clip_len
        self.base_channels = base_channels
        self.landmark_config = landmark_config
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.geometry_warmup_epochs = geometry_warmup_epochs
        self.learning_rate = learning_rate
        self.lr_schedule = lr_schedule
        self.huber_delta = huber_delta
        self.gp_weight = gp_weight
        self.masked_fill = masked_fill
        self.attention_placement = attention_placement
        self.loss_weights = loss_weights
        self.seed = seed
        self.work_dir = work_dir

    def _config(self) -> TrainConfig:
        weights = LossWeights(**self.loss_weights) if self.loss_weights \
            else LossWeights()
        return TrainConfig(
            frame_size=self.frame_size, clip_len=self.clip_len,
            base_channels=self.base_channels,
            landmark_config=self.landmark_config,
            stage1_epochs=self.stage1_epochs, stage2_epochs=self.stage2_epochs,
            geometry_warmup_epochs=self.geometry_warmup_epochs,
            learning_rate=self.learning_rate, lr_schedule=self.lr_schedule,
            huber_delta=self.huber_delta,
            gp_weight=self.gp_weight, masked_fill=self.masked_fill,
            attention_placement=self.attention_placement, weights=weights,
            seed=self.seed)

    def fit(self, X, y=None):
        """Train on clip samples (ground-truth clips with masks, references,
        and landmark arrays). ``y`` is ignored; present for API symmetry."""
        samples = _check_samples(X)
        if self.work_dir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="facefill-run-")
            run_dir = Path(self._tmp.name)
        else:
            run_dir = Path(self.work_dir)
        config = self._config()
        trainer = Trainer(config, samples, run_dir)
        self.manifest_ = trainer.train()
        final = "stage2" if config.stage2_epochs else "stage1"
        self.checkpoint_path_ = Path(self.manifest_.checkpoints[final])
        self.bundle_: TrainedBundle = load_bundle(self.checkpoint_path_)
        return self

    def _require_fitted(self) -> TrainedBundle:
        bundle = getattr(self, "bundle_", None)
        if bundle is None:
            raise NotFittedError("this FaceVideoInpainter is not fitted; "
                                 "call fit first")
        return bundle

    def transform(self, X) -> list:
        """Inpaint each sample's masked clip; returns one VideoClip per
        sample with non-occluded pixels passed through bitwise."""
        bundle = self._require_fitted()
        outputs = []
        for sample in _check_samples(X):
            inpainted, _ = infer(bundle, sample.clip, sample.mask,
                                 sample.reference, sample.landmarks)
            outputs.append(inpainted)
        return outputs

    def predict(self, X) -> list:
        """Reconstruct per-frame face meshes from the inpainted clips;
        returns a list of mesh lists, one per sample."""
        bundle = self._require_fitted()
        outputs = []
        for sample in _check_samples(X):
            _, meshes = infer(bundle, sample.clip, sample.mask,
                              sample.reference, sample.landmarks)
            outputs.append(meshes)
        return outputs

    def inpaint_and_reconstruct(self, sample: ClipSample):
        """One pass returning both the inpainted clip and its meshes."""
        bundle = self._require_fitted()
        return infer(bundle, sample.clip, sample.mask, sample.reference,
                     sample.landmarks)
