"""Evaluation battery: RGB metrics, mesh metrics, and report schemas."""

from .rgb import (
    FrameEmbedder,
    PairDistanceScorer,
    PyramidPairDistance,
    RandomProjectionEmbedder,
    TorchScriptEmbedder,
    TorchScriptPairDistance,
    resolve_embedder,
    resolve_pair_distance,
    fid,
    fid_from_embeddings,
    frechet_distance,
    lpips,
    mse,
    psnr,
    ssim,
    PSNR_CAP_DB,
)
from .mesh import PointCloudIndex, chamfer, mean_hausdorff, rms_error
from .report import (
    ABLATION_ROW_LABELS,
    LABEL_COLUMN,
    MESH_METRIC_COLUMNS,
    METRIC_COLUMNS,
    MetricsReport,
    RGB_METRIC_COLUMNS,
    TABLE_COLUMNS,
    ablation_rows,
    load_report_csv,
    render_table,
    save_ablation_csv,
    save_report_csv,
)

__all__ = [
    "FrameEmbedder", "PairDistanceScorer", "PyramidPairDistance",
    "RandomProjectionEmbedder", "TorchScriptEmbedder",
    "TorchScriptPairDistance", "resolve_embedder", "resolve_pair_distance",
    "fid",
    "fid_from_embeddings", "frechet_distance", "lpips", "mse", "psnr", "ssim",
    "PSNR_CAP_DB", "PointCloudIndex", "chamfer", "mean_hausdorff", "rms_error",
    "ABLATION_ROW_LABELS", "LABEL_COLUMN", "MESH_METRIC_COLUMNS",
    "METRIC_COLUMNS", "MetricsReport", "RGB_METRIC_COLUMNS", "TABLE_COLUMNS",
    "ablation_rows", "load_report_csv", "render_table", "save_ablation_csv",
    "save_report_csv",
]
