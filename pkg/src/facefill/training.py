"""Two-stage training: generator warm-up without the adversarial term and
with frozen geometry, then joint adversarial training with geometry
fine-tuning.

Every run owns an output directory holding the run manifest, a per-iteration
loss log (CSV), and stage-boundary checkpoints. All randomness flows from the
config seed, so identical (config, dataset) runs produce identical logs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data.clip import ClipSample, apply_mask, prepare_reference
from .geomreg import GeomRegressor, GeomRegressorConfig, parameter_checksum
from .landmarks import (
    HuberParams,
    LandmarkSet,
    dense_lm_loss,
    get_config,
    rasterize,
)
from .losses import (
    LossComputationError,
    LossWeights,
    adv_losses,
    clip_weights,
    fer_loss,
    gradient_penalty,
    recon_loss,
    resolve_expression_scorer,
    resolve_feature_extractor,
    style_loss,
    total_loss,
    vgg_loss,
)
from .morphable import MorphableModel, build_toy_model
from .nets import (
    DiscriminatorConfig,
    GeneratorConfig,
    GeneratorInput,
    InpaintGenerator,
    PatchDiscriminator,
)
from .validation import InputError

LOG_COLUMNS = ("stage", "iteration", "epoch", "clip", "adv", "fer", "style",
               "vgg", "recon", "dense_lm", "synergy", "disc", "lambda_adv",
               "total")


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; the run aborted after writing diagnostics."""


@dataclass
class TrainConfig:
    """Everything a run needs; defaults follow the full-scale recipe
    (128x128 frames, 32-frame clips, 100 warm-up epochs, Adam at 9.6e-5)."""

    frame_size: int = 128
    clip_len: int = 32
    base_channels: int = 16
    disc_channels: int = 16
    shift_fraction: float = 0.25
    attention_placement: str = "downsample"

    landmark_config: str = "dense216"
    landmark_radius: int = 1
    huber_delta: float = 1.0
    include_z: bool = True

    learning_rate: float = 9.6e-5
    lr_schedule: str = "constant"  # or "cosine" (per stage, floor 5%)
    stage1_epochs: int = 100
    stage2_epochs: int = 100
    weights: LossWeights = field(default_factory=LossWeights)
    gp_weight: float = 10.0
    wgan_mode: str = "penalty"  # or "clip"
    clip_bound: float = 0.01
    grad_clip: float = 0.0  # max gradient norm; 0 disables clipping

    k_id: int = 20
    k_exp: int = 10
    synergy_weight: float = 1.0
    freeze_geometry_stage2: bool = False
    # warm-up fits the geometry stack on unoccluded frames before the
    # generator ever sees its gradients; the stand-in for aligned pretrained
    # geometry weights, which keeps the frozen stage-1 landmark gradients
    # meaningful instead of noise
    geometry_warmup_epochs: int = 30

    masked_fill: str = "zero"  # or "noise"
    reference_index: str | int = 0
    feature_extractor: str = "stub"
    expression_scorer: str = "stub"

    seed: int = 0
    checkpoint_every_epochs: int = 0  # 0 = stage boundaries only

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.masked_fill not in ("zero", "noise"):
            raise InputError("masked_fill must be 'zero' or 'noise'")
        if self.wgan_mode not in ("penalty", "clip"):
            raise InputError("wgan_mode must be 'penalty' or 'clip'")
        if self.frame_size % 4:
            raise InputError("frame_size must be a multiple of 4")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Small preset that trains in minutes on a CPU."""
        base = dict(frame_size=64, clip_len=8, base_channels=16,
                    stage1_epochs=60, stage2_epochs=40,
                    learning_rate=1e-3)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["weights"] = self.weights.as_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class RunManifest:
    """Paths and fingerprints sufficient to reproduce or resume a run."""

    config: dict
    seed: int
    out_dir: str
    loss_log: str
    checkpoints: dict = field(default_factory=dict)
    geometry_checksums: dict = field(default_factory=dict)
    metrics_report: str | None = None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2))

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def build_generator_input(sample: ClipSample, indices, radius: int,
                          fill: str = "zero",
                          rng: np.random.Generator | None = None,
                          reference_index: int | None = None) -> GeneratorInput:
    """Assemble the conditioning stack for one sample.

    ``indices`` selects the active landmark density from the sample's full
    478-point arrays; ``fill`` controls what occluded pixels carry into the
    network (the compositing contract is unaffected).
    """
    if sample.landmarks is None:
        raise InputError(f"sample {sample.name} has no landmark source")
    masked = apply_mask(sample.clip, sample.mask).frames
    mask = sample.mask.mask
    if fill == "noise":
        if rng is None:
            rng = np.random.default_rng(0)
        noise = rng.uniform(0.0, 1.0, masked.shape)
        masked = masked + noise * mask[None, :, :, None]
    height, width = mask.shape
    maps = np.empty((sample.clip.frame_count, height, width, 1))
    idx = list(indices)
    for t in range(sample.clip.frame_count):
        points = LandmarkSet(sample.landmarks[t][idx])
        maps[t] = rasterize(points, height, width, radius)
    if reference_index is None:
        reference = sample.reference.pixels
    else:
        reference = prepare_reference(sample.clip, sample.mask,
                                      reference_index).pixels
    return GeneratorInput(masked_frames=masked, mask=mask,
                          landmark_maps=maps, reference=reference)


class _LossLog:
    def __init__(self, path: Path):
        self.path = Path(path)
        self._fh = self.path.open("w")
        self._fh.write(",".join(LOG_COLUMNS) + "\n")
        self._fh.flush()

    def append(self, **row) -> None:
        self._fh.write(",".join(str(row.get(c, "")) for c in LOG_COLUMNS) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


class Trainer:
    """Owns the model stack and its optimizers for one run."""

    def __init__(self, config: TrainConfig, dataset: list, out_dir,
                 morphable_model: MorphableModel | None = None):
        if not dataset:
            raise InputError("training needs a nonempty dataset")
        for sample in dataset:
            if sample.clip.height != config.frame_size \
                    or sample.clip.width != config.frame_size:
                raise InputError(f"sample {sample.name} is "
                                 f"{sample.clip.height}x{sample.clip.width}, "
                                 f"config wants {config.frame_size}")
            if sample.mask.occluded_fraction == 0.0:
                raise InputError(f"sample {sample.name} has an empty occlusion")
        self.config = config
        self.dataset = dataset
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

        torch.manual_seed(config.seed)
        self.np_rng = np.random.default_rng(config.seed)
        self.gp_generator = torch.Generator().manual_seed(config.seed + 1)

        self.generator = InpaintGenerator(GeneratorConfig(
            base_channels=config.base_channels,
            shift_fraction=config.shift_fraction,
            attention_placement=config.attention_placement))
        self.discriminator = PatchDiscriminator(DiscriminatorConfig(
            base_channels=config.disc_channels,
            shift_fraction=config.shift_fraction))
        self.morphable = morphable_model or build_toy_model(
            k_id=config.k_id, k_exp=config.k_exp, seed=config.seed)
        self.geomreg = GeomRegressor(self.morphable, GeomRegressorConfig(
            frame_size=config.frame_size))

        self.optim_g = torch.optim.Adam(self.generator.parameters(),
                                         lr=config.learning_rate)
        self.optim_d = torch.optim.Adam(self.discriminator.parameters(),
                                         lr=config.learning_rate)
        self.optim_geo = torch.optim.Adam(self.geomreg.parameters(),
                                           lr=config.learning_rate)

        self.extractor = resolve_feature_extractor(config.feature_extractor)
        self.scorer = resolve_expression_scorer(config.expression_scorer)
        self.lm_indices = get_config(config.landmark_config).index_list
        self.huber = HuberParams(config.huber_delta)

        self.iteration = 0
        self.stage_epochs_done = {"warmup": 0, "stage1": 0, "stage2": 0}
        self.geometry_checksums = {"init": parameter_checksum(self.geomreg)}

    # --- one step ---------------------------------------------------------

    def _sample_order(self) -> list:
        order = np.arange(len(self.dataset))
        self.np_rng.shuffle(order)
        return list(order)

    def _reference_index(self, sample: ClipSample) -> int | None:
        if self.config.reference_index == "random":
            return int(self.np_rng.integers(0, sample.clip.frame_count))
        return None  # keep the sample's prepared reference

    def _forward_losses(self, sample: ClipSample):
        cfg = self.config
        gen_input = build_generator_input(
            sample, self.lm_indices, cfg.landmark_radius, cfg.masked_fill,
            self.np_rng, self._reference_index(sample))
        composited = self.generator.forward_composited(gen_input)
        gt = torch.as_tensor(sample.clip.frames, dtype=torch.float32
                             ).permute(0, 3, 1, 2)
        mask_t = torch.as_tensor(sample.mask.mask, dtype=torch.float32
                                 )[None, None, :, :]

        terms = {
            "recon": recon_loss(composited, gt),
            "vgg": vgg_loss(composited, gt, self.extractor),
            "style": style_loss(composited, gt, self.extractor),
            "fer": fer_loss(composited, gt, self.scorer),
        }

        geom = self.geomreg.synergy_forward(composited.to(torch.float64),
                                            self.lm_indices)
        idx = list(self.lm_indices)
        gt_lm = torch.as_tensor(sample.landmarks[:, idx, :], dtype=torch.float64)
        dense = torch.stack([
            dense_lm_loss(points, gt_lm[t], self.huber, cfg.include_z)
            for t, points in enumerate(geom["landmarks"])]).mean()
        terms["dense_lm"] = dense

        synergy = torch.stack([
            ((fb - p.detach()) ** 2).mean()
            for fb, p in zip(geom["feedback"], geom["params"])]).mean()

        return gen_input, composited, gt, mask_t, terms, synergy

    def _stage_lr(self, stage: str, epoch: int, epochs: int) -> float:
        base = self.config.learning_rate
        if self.config.lr_schedule == "constant":
            return base
        progress = epoch / max(epochs, 1)
        return base * (0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * progress)))

    def _train_stage(self, stage: str, epochs: int, weights: LossWeights,
                     log: _LossLog) -> None:
        cfg = self.config
        train_geometry = stage == "stage2" and not cfg.freeze_geometry_stage2
        self.geomreg.set_frozen(not train_geometry)
        start_epoch = self.stage_epochs_done[stage]
        for epoch in range(start_epoch, epochs):
            lr = self._stage_lr(stage, epoch, epochs)
            for group in (self.optim_g.param_groups + self.optim_d.param_groups
                          + self.optim_geo.param_groups):
                group["lr"] = lr
            for idx in self._sample_order():
                sample = self.dataset[idx]
                gen_input, composited, gt, mask_t, terms, synergy = \
                    self._forward_losses(sample)

                disc_value = 0.0
                if stage == "stage2":
                    # critic update on detached fakes
                    self.optim_d.zero_grad()
                    real_scores = self.discriminator(gt, mask_t)
                    fake_scores = self.discriminator(composited.detach(), mask_t)
                    _, d_loss = adv_losses(real_scores, fake_scores)
                    if cfg.wgan_mode == "penalty":
                        critic = lambda clip: self.discriminator(clip, mask_t)
                        d_loss = d_loss + cfg.gp_weight * gradient_penalty(
                            critic, gt, composited, self.gp_generator)
                    d_loss.backward()
                    self.optim_d.step()
                    if cfg.wgan_mode == "clip":
                        clip_weights(self.discriminator, cfg.clip_bound)
                    disc_value = float(d_loss.detach())

                    gen_scores = self.discriminator(composited, mask_t)
                    adv_term, _ = adv_losses(gen_scores.detach(), gen_scores)
                    terms["adv"] = adv_term
                else:
                    terms["adv"] = torch.zeros((), dtype=torch.float64)

                report = total_loss(terms, weights)
                objective = report.total
                if stage == "stage2":
                    objective = objective + cfg.synergy_weight * synergy
                if not torch.isfinite(objective):
                    raise LossComputationError("objective is non-finite")

                self.optim_g.zero_grad()
                if train_geometry:
                    self.optim_geo.zero_grad()
                objective.backward()
                if cfg.grad_clip > 0:
                    torch.nn.utils.clip_grad_norm_(self.generator.parameters(),
                                                   cfg.grad_clip)
                self.optim_g.step()
                if train_geometry:
                    self.optim_geo.step()

                self.iteration += 1
                row = report.as_floats()
                log.append(stage=stage, iteration=self.iteration, epoch=epoch,
                           clip=sample.name, synergy=float(synergy.detach()),
                           disc=disc_value, lambda_adv=weights.adv, **row)
            self.stage_epochs_done[stage] = epoch + 1
            if cfg.checkpoint_every_epochs and \
                    (epoch + 1) % cfg.checkpoint_every_epochs == 0:
                self.save_checkpoint(self.out_dir / "latest.pt", stage)

    # --- public API ----------------------------------------------------------

    def train(self) -> RunManifest:
        log_path = self.out_dir / "loss_log.csv"
        log = _LossLog(log_path)
        manifest = RunManifest(config=self.config.to_dict(),
                               seed=self.config.seed,
                               out_dir=str(self.out_dir),
                               loss_log=str(log_path),
                               geometry_checksums=self.geometry_checksums)
        try:
            self._run_stages(log, manifest)
        except LossComputationError as exc:
            diag = self.out_dir / "diverged.json"
            diag.write_text(json.dumps({"iteration": self.iteration,
                                        "error": str(exc)}))
            raise TrainingDiverged(
                f"aborted at iteration {self.iteration}: {exc}; diagnostics "
                f"in {diag}, resume from the last checkpoint") from exc
        finally:
            log.close()
        manifest.save(self.out_dir / "manifest.json")
        return manifest

    def _warmup_geometry(self, epochs: int, log: _LossLog) -> None:
        """Fit the geometry stack on ground-truth frames and landmarks."""
        cfg = self.config
        self.geomreg.set_frozen(False)
        idx = list(self.lm_indices)
        for epoch in range(self.stage_epochs_done["warmup"], epochs):
            for sample_idx in self._sample_order():
                sample = self.dataset[sample_idx]
                frames = torch.as_tensor(sample.clip.frames
                                         ).permute(0, 3, 1, 2)
                geom = self.geomreg.synergy_forward(frames, idx)
                gt_lm = torch.as_tensor(sample.landmarks[:, idx, :],
                                        dtype=torch.float64)
                dense = torch.stack([
                    dense_lm_loss(points, gt_lm[t], self.huber, cfg.include_z)
                    for t, points in enumerate(geom["landmarks"])]).mean()
                synergy = torch.stack([
                    ((fb - p.detach()) ** 2).mean()
                    for fb, p in zip(geom["feedback"], geom["params"])]).mean()
                loss = dense + cfg.synergy_weight * synergy
                if not torch.isfinite(loss):
                    raise LossComputationError("geometry warm-up diverged")
                self.optim_geo.zero_grad()
                loss.backward()
                self.optim_geo.step()
                self.iteration += 1
                log.append(stage="warmup", iteration=self.iteration,
                           epoch=epoch, clip=sample.name,
                           dense_lm=float(dense.detach()),
                           synergy=float(synergy.detach()), lambda_adv=0.0,
                           total=float(loss.detach()))
            self.stage_epochs_done["warmup"] = epoch + 1

    def _run_stages(self, log: _LossLog, manifest: RunManifest) -> None:
        cfg = self.config
        if self.stage_epochs_done["warmup"] < cfg.geometry_warmup_epochs:
            self._warmup_geometry(cfg.geometry_warmup_epochs, log)
        self.geometry_checksums.setdefault("after_warmup",
                                           parameter_checksum(self.geomreg))
        if self.stage_epochs_done["stage1"] < cfg.stage1_epochs:
            self._train_stage("stage1", cfg.stage1_epochs,
                              cfg.weights.for_pretraining(), log)
        self.geometry_checksums.setdefault("after_stage1",
                                           parameter_checksum(self.geomreg))
        path = self.save_checkpoint(self.out_dir / "stage1.pt", "stage1")
        manifest.checkpoints["stage1"] = str(path)
        if cfg.stage2_epochs > 0:
            self._train_stage("stage2", cfg.stage2_epochs, cfg.weights, log)
            path = self.save_checkpoint(self.out_dir / "stage2.pt", "stage2")
            manifest.checkpoints["stage2"] = str(path)
        manifest.geometry_checksums = self.geometry_checksums

    def save_checkpoint(self, path, stage: str) -> Path:
        path = Path(path)
        torch.save({
            "config": self.config.to_dict(),
            "stage": stage,
            "iteration": self.iteration,
            "stage_epochs_done": dict(self.stage_epochs_done),
            "generator": self.generator.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "geomreg": self.geomreg.state_dict(),
            "morphable": {
                "mean_shape": self.morphable.mean_shape.numpy(),
                "identity_basis": self.morphable.identity_basis.numpy(),
                "expression_basis": self.morphable.expression_basis.numpy(),
                "faces": self.morphable.faces,
                "landmark_indices": self.morphable.landmark_indices,
            },
            "optim_g": self.optim_g.state_dict(),
            "optim_d": self.optim_d.state_dict(),
            "optim_geo": self.optim_geo.state_dict(),
            "geometry_checksums": dict(self.geometry_checksums),
            "torch_rng": torch.get_rng_state(),
            "gp_rng": self.gp_generator.get_state(),
            "np_rng": self.np_rng.bit_generator.state,
        }, path)
        return path

    @classmethod
    def resume(cls, checkpoint_path, dataset: list, out_dir,
               config_updates: dict | None = None) -> "Trainer":
        """Rebuild a trainer from a checkpoint; ``train()`` continues from
        the recorded stage and epoch.

        ``config_updates`` may extend schedule fields (e.g. more stage-2
        epochs); architecture fields must stay compatible with the weights.
        """
        state = torch.load(Path(checkpoint_path), weights_only=False)
        config_dict = dict(state["config"])
        if config_updates:
            config_dict.update(config_updates)
        config = TrainConfig.from_dict(config_dict)
        morph = MorphableModel(**state["morphable"])
        trainer = cls(config, dataset, out_dir, morphable_model=morph)
        trainer.generator.load_state_dict(state["generator"])
        trainer.discriminator.load_state_dict(state["discriminator"])
        trainer.geomreg.load_state_dict(state["geomreg"])
        trainer.optim_g.load_state_dict(state["optim_g"])
        trainer.optim_d.load_state_dict(state["optim_d"])
        trainer.optim_geo.load_state_dict(state["optim_geo"])
        trainer.iteration = state["iteration"]
        trainer.stage_epochs_done = dict(state["stage_epochs_done"])
        trainer.geometry_checksums = dict(state["geometry_checksums"])
        torch.set_rng_state(state["torch_rng"])
        trainer.gp_generator.set_state(state["gp_rng"])
        trainer.np_rng.bit_generator.state = state["np_rng"]
        return trainer
