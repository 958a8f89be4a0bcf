"""Command-line entry point.

Subcommands: ``prepare`` (synthesize a clip dataset), ``train``, ``infer``,
``evaluate``, ``ablate``, and ``report``. Global flags ``--config``,
``--seed``, and ``--out`` apply across subcommands; the config file is JSON
mirroring the training configuration. Exit code 0 only on full success.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .data.io import load_dataset, save_dataset
from .data.synthetic import synthetic_dataset
from .metrics import ablation_rows, load_report_csv, render_table, save_report_csv
from .pipeline import (
    evaluate_directories,
    infer,
    load_bundle,
    run_ablation,
    save_inference,
)
from .training import TrainConfig, Trainer


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facefill",
        description="Occluded-face video inpainting and 3D geometry recovery.")
    parser.add_argument("--config", help="JSON training config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory or file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="synthesize a clip dataset")
    p.add_argument("--clips", type=int, default=2)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--size", type=int, default=64)

    p = sub.add_parser("train", help="run two-stage training")
    p.add_argument("--data", required=True, help="dataset directory")

    p = sub.add_parser("infer", help="inpaint clips and emit meshes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory")

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--checkpoint", help="geometry source for mesh metrics")

    p = sub.add_parser("ablate", help="train/evaluate every landmark density")
    p.add_argument("--data", required=True)

    p = sub.add_parser("report", help="render metric CSVs side by side")
    p.add_argument("--metrics", nargs="+", required=True)

    return parser


def _load_config(args) -> TrainConfig:
    config = TrainConfig.load(args.config) if args.config else TrainConfig.desk()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def _require_out(args) -> Path:
    if not args.out:
        raise SystemExit("--out is required for this subcommand")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_prepare(args) -> None:
    out = _require_out(args)
    seed = args.seed if args.seed is not None else 0
    samples = synthetic_dataset(args.clips, args.frames, args.size, args.size,
                                seed)
    save_dataset(samples, out)
    print(f"wrote {len(samples)} clips to {out}")


def _cmd_train(args) -> None:
    out = _require_out(args)
    config = _load_config(args)
    dataset = load_dataset(args.data)
    manifest = Trainer(config, dataset, out).train()
    print(f"run manifest: {Path(manifest.out_dir) / 'manifest.json'}")


def _cmd_infer(args) -> None:
    out = _require_out(args)
    bundle = load_bundle(args.checkpoint)
    for sample in load_dataset(args.data):
        inpainted, meshes = infer(bundle, sample.clip, sample.mask,
                                  sample.reference, sample.landmarks)
        save_inference(out / sample.name, inpainted, meshes)
        print(f"{sample.name}: {inpainted.frame_count} frames, "
              f"{len(meshes)} meshes")


def _cmd_evaluate(args) -> None:
    out = _require_out(args)
    bundle = load_bundle(args.checkpoint) if args.checkpoint else None
    seed = args.seed if args.seed is not None else 0
    report = evaluate_directories(args.pred, args.gt, bundle=bundle, seed=seed)
    path = out / "metrics.csv"
    save_report_csv(report, path)
    print(render_table(ablation_rows([report])))
    print(f"per-clip metrics: {path}")


def _cmd_ablate(args) -> None:
    out = _require_out(args)
    config = _load_config(args)
    dataset = load_dataset(args.data)
    reports = run_ablation(config, dataset, out)
    print((out / "ablation.txt").read_text())
    print(f"merged table: {out / 'ablation.csv'}")


def _cmd_report(args) -> None:
    reports = [load_report_csv(path) for path in args.metrics]
    table = render_table(ablation_rows(reports))
    print(table)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(table + "\n")


_COMMANDS = {
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"facefill {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
