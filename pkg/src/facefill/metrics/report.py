"""Evaluation report containers and the fixed comparison-table schemas.

A report holds per-clip metric rows plus exact averages, tagged with the
landmark density configuration that produced them. The ablation table merges
one report per configuration into the fixed row-label / column-header schema.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..validation import InputError

RGB_METRIC_COLUMNS = ("FID", "MSE", "LPIPS", "SSIM", "PSNR")
MESH_METRIC_COLUMNS = ("Average Chamfer Distance", "Average RMS Error",
                       "Average Hausdorff Distance")
METRIC_COLUMNS = RGB_METRIC_COLUMNS + MESH_METRIC_COLUMNS
LABEL_COLUMN = "Model"
TABLE_COLUMNS = (LABEL_COLUMN,) + METRIC_COLUMNS

ABLATION_ROW_LABELS = {
    "dense216": "Ours (216 LM)",
    "standard68": "Ours (68 LM)",
    "focus20": "Ours (20 LM)",
    "minimal10": "Ours (10 LM)",
}


@dataclass
class MetricsReport:
    """Per-clip rows and their exact mean, for one landmark configuration."""

    landmark_config: str
    per_clip: list
    averages: dict = field(init=False)

    def __post_init__(self):
        if not self.per_clip:
            raise InputError("a metrics report needs at least one clip row")
        for row in self.per_clip:
            missing = [c for c in METRIC_COLUMNS if c not in row]
            if missing:
                raise InputError(f"clip row is missing metrics: {missing}")
        self.averages = {
            column: float(np.mean([row[column] for row in self.per_clip]))
            for column in METRIC_COLUMNS
        }

    @property
    def row_label(self) -> str:
        return ABLATION_ROW_LABELS.get(self.landmark_config,
                                       self.landmark_config)


def save_report_csv(report: MetricsReport, path) -> None:
    """Per-clip rows plus a final average row; schema columns exactly."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip", *METRIC_COLUMNS, "landmark_config"])
        for row in report.per_clip:
            writer.writerow([row.get("clip", ""),
                             *[repr(float(row[c])) for c in METRIC_COLUMNS],
                             report.landmark_config])
        writer.writerow(["average",
                         *[repr(report.averages[c]) for c in METRIC_COLUMNS],
                         report.landmark_config])


def load_report_csv(path) -> MetricsReport:
    path = Path(path)
    per_clip = []
    config = ""
    with path.open() as fh:
        for record in csv.DictReader(fh):
            if record["clip"] == "average":
                config = record["landmark_config"]
                continue
            row = {c: float(record[c]) for c in METRIC_COLUMNS}
            row["clip"] = record["clip"]
            config = record["landmark_config"]
            per_clip.append(row)
    if not per_clip:
        raise InputError(f"no clip rows in {path}")
    return MetricsReport(landmark_config=config, per_clip=per_clip)


def ablation_rows(reports) -> list:
    """One labeled row per report, in the fixed 216/68/20/10 order when the
    configurations are the four named densities."""
    order = list(ABLATION_ROW_LABELS)
    reports = sorted(reports, key=lambda r: (order.index(r.landmark_config)
                                             if r.landmark_config in order
                                             else len(order)))
    rows = []
    for report in reports:
        row = {LABEL_COLUMN: report.row_label}
        row.update(report.averages)
        rows.append(row)
    return rows


def save_ablation_csv(reports, path) -> None:
    rows = ablation_rows(reports)
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(TABLE_COLUMNS))
        writer.writeheader()
        for row in rows:
            writer.writerow({LABEL_COLUMN: row[LABEL_COLUMN],
                             **{c: repr(float(row[c])) for c in METRIC_COLUMNS}})


def render_table(rows, columns=TABLE_COLUMNS, precision: int = 4) -> str:
    """Fixed-width side-by-side text table of labeled metric rows."""
    formatted = []
    for row in rows:
        formatted.append([str(row.get(columns[0], ""))]
                         + [f"{float(row[c]):.{precision}f}" for c in columns[1:]])
    widths = [max(len(col), *(len(r[i]) for r in formatted))
              for i, col in enumerate(columns)]
    lines = ["  ".join(col.ljust(widths[i]) for i, col in enumerate(columns))]
    lines.append("  ".join("-" * w for w in widths))
    for r in formatted:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(columns))))
    return "\n".join(lines)
