"""Inference, evaluation, and the landmark-density ablation harness.

Inference composites the generator output over the masked clip and then
reconstructs per-frame geometry from the inpainted frames alone. Evaluation
compares prediction directories against ground truth on the full metric
battery; ground-truth meshes are regressed on the fly from the unoccluded
frames using the same geometry stack.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .data.clip import ClipSample, OcclusionMask, ReferenceFrame, VideoClip, prepare_reference
from .data.io import ClipIOError, load_clip, save_clip
from .geomreg import GeomRegressor, GeomRegressorConfig
from .landmarks import LandmarkDetector, get_config
from .metrics import (
    MetricsReport,
    MESH_METRIC_COLUMNS,
    ablation_rows,
    chamfer,
    fid,
    lpips,
    mean_hausdorff,
    mse,
    psnr,
    render_table,
    resolve_embedder,
    resolve_pair_distance,
    rms_error,
    save_ablation_csv,
    save_report_csv,
    ssim,
)
from .morphable import MorphableModel, save_mesh
from .nets import DiscriminatorConfig, GeneratorConfig, InpaintGenerator, PatchDiscriminator
from .training import TrainConfig, Trainer, build_generator_input
from .validation import InputError


@dataclass
class TrainedBundle:
    """A checkpoint brought back to life: config plus the model stack."""

    config: TrainConfig
    generator: InpaintGenerator
    discriminator: PatchDiscriminator
    geomreg: GeomRegressor
    morphable: MorphableModel
    stage: str


def load_bundle(path) -> TrainedBundle:
    path = Path(path)
    if not path.exists():
        raise InputError(f"checkpoint {path} does not exist")
    state = torch.load(path, weights_only=False)
    for key in ("config", "generator", "geomreg", "morphable"):
        if key not in state:
            raise InputError(f"checkpoint {path} is missing {key!r}; not a "
                             "training checkpoint")
    config = TrainConfig.from_dict(state["config"])
    generator = InpaintGenerator(GeneratorConfig(
        base_channels=config.base_channels,
        shift_fraction=config.shift_fraction,
        attention_placement=config.attention_placement))
    generator.load_state_dict(state["generator"])
    generator.eval()
    discriminator = PatchDiscriminator(DiscriminatorConfig(
        base_channels=config.disc_channels,
        shift_fraction=config.shift_fraction))
    discriminator.load_state_dict(state["discriminator"])
    morphable = MorphableModel(**state["morphable"])
    geomreg = GeomRegressor(morphable, GeomRegressorConfig(
        frame_size=config.frame_size))
    geomreg.load_state_dict(state["geomreg"])
    return TrainedBundle(config=config, generator=generator,
                         discriminator=discriminator, geomreg=geomreg,
                         morphable=morphable, stage=state.get("stage", ""))


def _resolve_landmarks(clip: VideoClip, landmark_source) -> np.ndarray:
    if landmark_source is None:
        raise InputError("inference needs a landmark source (array or detector)")
    if isinstance(landmark_source, LandmarkDetector):
        points = []
        for frame in clip.frames:
            found = landmark_source.detect(frame)
            if found is None:
                raise InputError("landmark detector found no face in a frame")
            points.append(found.points)
        return np.stack(points, axis=0)
    arr = np.asarray(landmark_source, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != clip.frame_count or arr.shape[2] != 3:
        raise InputError(f"landmark array must be [T, 478, 3] matching the "
                         f"clip, got {arr.shape}")
    return arr


def infer(bundle: TrainedBundle, clip: VideoClip, mask: OcclusionMask,
          reference: ReferenceFrame | None = None, landmark_source=None):
    """Inpaint a clip and reconstruct per-frame geometry.

    Geometry is regressed solely from the inpainted frames. Returns
    ``(VideoClip, list[FaceMesh])``.
    """
    config = bundle.config
    if clip.height != config.frame_size or clip.width != config.frame_size:
        raise InputError(f"checkpoint was trained at {config.frame_size}; "
                         f"clip is {clip.height}x{clip.width}")
    landmarks = _resolve_landmarks(clip, landmark_source)
    if reference is None:
        reference = prepare_reference(clip, mask, 0)
    sample = ClipSample(clip=clip, mask=mask, reference=reference,
                        landmarks=landmarks)
    indices = get_config(config.landmark_config).index_list
    gen_input = build_generator_input(sample, indices, config.landmark_radius,
                                      config.masked_fill,
                                      np.random.default_rng(config.seed))
    inpainted = VideoClip(bundle.generator.generate(gen_input))
    meshes = [bundle.geomreg.reconstruct_from_frame(frame)
              for frame in inpainted.frames]
    return inpainted, meshes


def save_inference(out_dir, inpainted: VideoClip, meshes) -> None:
    out_dir = Path(out_dir)
    save_clip(inpainted, out_dir / "frames")
    mesh_dir = out_dir / "meshes"
    mesh_dir.mkdir(parents=True, exist_ok=True)
    for t, mesh in enumerate(meshes):
        save_mesh(mesh, mesh_dir / f"{t:05d}.obj")


# --- evaluation -------------------------------------------------------------------

def _fresh_geometry(frame_size: int, seed: int) -> GeomRegressor:
    from .morphable import build_toy_model
    torch.manual_seed(seed)
    model = build_toy_model(seed=seed)
    return GeomRegressor(model, GeomRegressorConfig(frame_size=frame_size))


def _clip_metrics(pred: VideoClip, gt: VideoClip, geomreg: GeomRegressor,
                  embedder, pair_scorer) -> dict:
    row = {
        "FID": fid(pred, gt, embedder),
        "MSE": mse(pred, gt),
        "LPIPS": lpips(pred, gt, pair_scorer),
        "SSIM": ssim(pred, gt),
        "PSNR": psnr(pred, gt),
    }
    per_frame = {name: [] for name in MESH_METRIC_COLUMNS}
    for t in range(pred.frame_count):
        pred_mesh = geomreg.reconstruct_from_frame(pred.frames[t])
        gt_mesh = geomreg.reconstruct_from_frame(gt.frames[t])
        per_frame["Average Chamfer Distance"].append(chamfer(pred_mesh, gt_mesh))
        per_frame["Average RMS Error"].append(rms_error(pred_mesh, gt_mesh))
        per_frame["Average Hausdorff Distance"].append(
            mean_hausdorff(pred_mesh, gt_mesh))
    for name, values in per_frame.items():
        row[name] = float(np.mean(values))
    return row


def evaluate_pairs(pairs, geomreg: GeomRegressor, landmark_config: str,
                   embedder=None, pair_scorer=None) -> MetricsReport:
    """Metric rows for (name, predicted clip, ground-truth clip) triples."""
    embedder = embedder or resolve_embedder()
    pair_scorer = pair_scorer or resolve_pair_distance()
    rows = []
    for name, pred, gt in pairs:
        if pred.frames.shape != gt.frames.shape:
            raise InputError(f"clip {name}: prediction and ground truth "
                             "shapes differ")
        row = _clip_metrics(pred, gt, geomreg, embedder, pair_scorer)
        row["clip"] = name
        rows.append(row)
    return MetricsReport(landmark_config=landmark_config, per_clip=rows)


def _clip_directory(path: Path) -> Path:
    return path / "frames" if (path / "frames").is_dir() else path


def evaluate_directories(pred_root, gt_root, bundle: TrainedBundle | None = None,
                         landmark_config: str | None = None,
                         seed: int = 0) -> MetricsReport:
    """Compare matching clip directories; errors list offending clips."""
    pred_root, gt_root = Path(pred_root), Path(gt_root)
    pred_names = {p.name for p in pred_root.iterdir() if p.is_dir()} \
        if pred_root.is_dir() else set()
    gt_names = {p.name for p in gt_root.iterdir() if p.is_dir()} \
        if gt_root.is_dir() else set()
    if not gt_names:
        raise ClipIOError(f"no clip directories under {gt_root}")
    missing = sorted(gt_names - pred_names)
    extra = sorted(pred_names - gt_names)
    if missing or extra:
        raise ClipIOError(f"clip inventories differ: missing predictions for "
                          f"{missing}, unmatched predictions {extra}")
    names = sorted(gt_names)
    first = load_clip(_clip_directory(gt_root / names[0]))
    if bundle is not None:
        geomreg = bundle.geomreg
        landmark_config = landmark_config or bundle.config.landmark_config
    else:
        geomreg = _fresh_geometry(first.height, seed)
        landmark_config = landmark_config or "dense216"
    pairs = [(name,
              load_clip(_clip_directory(pred_root / name)),
              load_clip(_clip_directory(gt_root / name)))
             for name in names]
    return evaluate_pairs(pairs, geomreg, landmark_config)


# --- ablation harness ---------------------------------------------------------------

ABLATION_CONFIGS = ("dense216", "standard68", "focus20", "minimal10")


def run_ablation(base_config: TrainConfig, dataset: list, out_dir,
                 config_names=ABLATION_CONFIGS):
    """Train and evaluate one run per landmark density with a shared seed.

    Writes per-run artifacts under ``out_dir/<config>/``, a merged
    ``ablation.csv``, and a rendered ``ablation.txt``. Partial results are
    kept on disk if a run fails; the first failure is re-raised afterwards.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports, first_error = [], None
    for name in config_names:
        run_dir = out_dir / name
        try:
            config = replace(base_config, landmark_config=name)
            trainer = Trainer(config, dataset, run_dir)
            trainer.train()
            bundle = load_bundle(run_dir / ("stage2.pt" if config.stage2_epochs
                                            else "stage1.pt"))
            pairs = []
            for sample in dataset:
                pred, _ = infer(bundle, sample.clip, sample.mask,
                                sample.reference, sample.landmarks)
                pairs.append((sample.name, pred, sample.clip))
            report = evaluate_pairs(pairs, bundle.geomreg, name)
            save_report_csv(report, run_dir / "metrics.csv")
            reports.append(report)
        except Exception as exc:  # keep earlier runs' results on disk
            if first_error is None:
                first_error = exc
    if reports:
        rows = ablation_rows(reports)
        save_ablation_csv(reports, out_dir / "ablation.csv")
        (out_dir / "ablation.txt").write_text(render_table(rows) + "\n")
    if first_error is not None:
        raise first_error
    return reports
