"""Command-line interface.

One executable with a --command selector:

  gen-data          write a synthetic dataset
  train             train a model, saving checkpoint + metrics log + curves
  eval              score predictions (from a checkpoint or a raster dir)
  predict           write class-index rasters (and optional overlays)
  reconstruct-demo  write masked-input/reconstruction image panels
  ablate            train flag variants and emit a comparison table
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .ablate import ablation_run, resolve_variants
from .checkpoint import CheckpointError
from .config import ConfigError, ModelConfig, load_config
from .hiar import adjust_to_ratio, masked_image_preview, mine_hard_patches, reconstruct
from .losses import assemble_mask
from .metrics import evaluate_masks
from .model import PredictRequest, predict, restore_model, samples_to_tensor, set_determinism
from .netpbm import read_pgm, write_pgm, write_ppm
from .prompts import PromptBundle
from .report import (
    plot_ablation_table,
    plot_per_class_iou,
    plot_reconstruction_panel,
    plot_training_curves,
    write_ablation_table,
    write_metrics_report,
    write_per_class_csv,
)
from .synthdata import generate_dataset, image_to_uint8, load_dataset, load_split
from .train import train_from_directory

COMMANDS = ("gen-data", "train", "eval", "predict", "reconstruct-demo", "ablate")

# fixed overlay palette, one color per class id starting at 1
_PALETTE = np.array(
    [(228, 26, 28), (55, 126, 184), (77, 175, 74), (152, 78, 163),
     (255, 127, 0), (166, 86, 40)], dtype=np.float32,
) / 255.0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptseg", description="text-promptable shape segmentation"
    )
    parser.add_argument("--command", required=True, choices=COMMANDS)
    parser.add_argument("--config", help="flat key-value config file")
    parser.add_argument("--data-dir", help="dataset directory")
    parser.add_argument("--checkpoint", help="checkpoint archive path")
    parser.add_argument("--out-dir", help="output directory")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--num-images", type=int, default=40,
                        help="gen-data: dataset size")
    parser.add_argument("--pred-dir", help="eval: directory of predicted class rasters")
    parser.add_argument("--split", choices=("all", "train", "val"), default="all",
                        help="eval/predict: which images to use")
    parser.add_argument("--overlays", action="store_true",
                        help="predict: also write color overlay images")
    parser.add_argument("--variants", default="full,no_msfa,single_prompt,no_hiar",
                        help="ablate: comma-separated variant names")
    parser.add_argument("--ablate-seeds", default="0",
                        help="ablate: comma-separated seeds")
    parser.add_argument("--num-demo", type=int, default=4,
                        help="reconstruct-demo: number of images")
    return parser


def _load_cfg(args) -> ModelConfig:
    cfg = load_config(args.config) if args.config else ModelConfig()
    cfg.validate()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            raise SystemExit(f"--{name} is required for --command {args.command}")


def _select_split(samples, data_dir, which: str):
    if which == "all":
        return samples
    split = load_split(data_dir)
    wanted = set(split.get(which, []))
    return [s for s in samples if s.image_id in wanted]


def _overlay(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = image.copy()
    for class_id in np.unique(mask):
        if class_id == 0:
            continue
        color = _PALETTE[(int(class_id) - 1) % len(_PALETTE)]
        region = mask == class_id
        out[region] = 0.45 * out[region] + 0.55 * color
    return out


def cmd_gen_data(args) -> int:
    _require(args, "out-dir")
    cfg = _load_cfg(args)
    seed = args.seed if args.seed is not None else cfg.seed
    generate_dataset(cfg, args.num_images, seed, args.out_dir)
    print(f"wrote {args.num_images} images to {args.out_dir}")
    return 0


def cmd_train(args) -> int:
    _require(args, "data-dir", "out-dir")
    cfg = _load_cfg(args)
    result = train_from_directory(cfg, args.data_dir, out_dir=args.out_dir, seed=args.seed)
    plot_training_curves(Path(args.out_dir) / "figures" / "training_curves.png", result.logs)
    last = result.logs[-1]
    print(
        f"trained {last.epoch} epochs; best val challenge IoU "
        f"{result.best_val_ch_iou:.2f} at epoch {result.best_epoch}; "
        f"checkpoint {result.checkpoint_path}"
    )
    return 0


def _predict_samples(model, samples, classes):
    bundles = [PromptBundle(c.class_id, c.name, tuple(c.prompts)) for c in classes]
    preds = []
    bs = model.config.batch_size
    for start in range(0, len(samples), bs):
        chunk = samples[start : start + bs]
        result = predict(model, PredictRequest(images=samples_to_tensor(chunk), bundles=bundles))
        preds.extend(result.mask[i].numpy().astype(np.uint8) for i in range(len(chunk)))
    return preds


def cmd_eval(args) -> int:
    _require(args, "data-dir", "out-dir")
    samples, classes = load_dataset(args.data_dir)
    samples = _select_split(samples, args.data_dir, args.split)
    if not samples:
        raise SystemExit(f"no images in split {args.split!r}")
    if args.pred_dir:
        preds = []
        for sample in samples:
            path = Path(args.pred_dir) / f"{sample.image_id}.pgm"
            if not path.exists():
                raise SystemExit(f"missing prediction raster: {path}")
            preds.append(read_pgm(path))
    elif args.checkpoint:
        model, _ = restore_model(args.checkpoint)
        set_determinism(model.config.seed)
        preds = _predict_samples(model, samples, classes)
    else:
        raise SystemExit("--checkpoint or --pred-dir is required for --command eval")
    report = evaluate_masks(
        preds,
        [s.mask for s in samples],
        len(classes),
        class_names=[c.name for c in classes],
        image_ids=[s.image_id for s in samples],
    )
    out = Path(args.out_dir)
    write_metrics_report(out / "metrics.json", report)
    write_per_class_csv(out / "per_class.csv", report)
    plot_per_class_iou(out / "figures" / "per_class_iou.png", report,
                       title=f"per-class IoU ({args.split})")
    print(
        f"ch_iou={report.ch_iou:.2f} isi_iou={report.isi_iou:.2f} mc_iou={report.mc_iou:.2f} "
        f"({len(samples)} images)"
    )
    return 0


def cmd_predict(args) -> int:
    _require(args, "data-dir", "out-dir", "checkpoint")
    model, _ = restore_model(args.checkpoint)
    set_determinism(model.config.seed)
    samples, classes = load_dataset(args.data_dir)
    samples = _select_split(samples, args.data_dir, args.split)
    preds = _predict_samples(model, samples, classes)
    out = Path(args.out_dir)
    (out / "pred").mkdir(parents=True, exist_ok=True)
    if args.overlays:
        (out / "overlays").mkdir(parents=True, exist_ok=True)
    for sample, pred in zip(samples, preds):
        write_pgm(out / "pred" / f"{sample.image_id}.pgm", pred)
        if args.overlays:
            overlay = image_to_uint8(_overlay(sample.image, pred))
            write_ppm(out / "overlays" / f"{sample.image_id}.ppm", overlay)
    print(f"wrote {len(preds)} prediction rasters to {out / 'pred'}")
    return 0


def cmd_reconstruct_demo(args) -> int:
    _require(args, "data-dir", "out-dir", "checkpoint")
    model, _ = restore_model(args.checkpoint)
    cfg = model.config
    seed = args.seed if args.seed is not None else cfg.seed
    set_determinism(seed)
    generator = torch.Generator().manual_seed(seed)
    samples, classes = load_dataset(args.data_dir)
    samples = samples[: args.num_demo]
    bundles = [PromptBundle(c.class_id, c.name, tuple(c.prompts)) for c in classes]
    images = samples_to_tensor(samples)
    result = predict(model, PredictRequest(images=images, bundles=bundles))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    triplets, ids = [], []
    for i, sample in enumerate(samples):
        gt = torch.from_numpy(sample.mask.astype(np.int64))
        hard, _ = mine_hard_patches(result.mask[i], gt, cfg.patch_size)
        patch_mask = adjust_to_ratio(hard, cfg.mask_ratio_threshold, generator,
                                     use_hard_areas=cfg.ham)
        with torch.no_grad():
            recon = reconstruct(images[i : i + 1], patch_mask.reshape(1, -1),
                                model.image_encoder, model.rec_decoder)[0]
        preview = masked_image_preview(images[i], patch_mask, cfg.patch_size)
        triplet = tuple(t.permute(1, 2, 0).numpy() for t in (images[i], preview, recon))
        for tag, array in zip(("input", "masked", "recon"), triplet):
            write_ppm(out / f"{sample.image_id}_{tag}.ppm", image_to_uint8(array))
        triplets.append(triplet)
        ids.append(sample.image_id)
    plot_reconstruction_panel(out / "figures" / "reconstruction_panel.png", triplets, ids)
    print(f"wrote {len(triplets)} reconstruction triplets to {out}")
    return 0


def cmd_ablate(args) -> int:
    _require(args, "data-dir", "out-dir")
    cfg = _load_cfg(args)
    variants = resolve_variants([v.strip() for v in args.variants.split(",") if v.strip()])
    seeds = [int(s) for s in args.ablate_seeds.split(",") if s.strip()]
    rows = ablation_run(cfg, variants, args.data_dir, seeds=seeds,
                        out_dir=Path(args.out_dir) / "runs")
    out = Path(args.out_dir)
    write_ablation_table(out / "ablation.json", out / "ablation.txt", rows)
    plot_ablation_table(out / "figures" / "ablation_chart.png", rows)
    print((out / "ablation.txt").read_text(), end="")
    return 0


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "reconstruct-demo": cmd_reconstruct_demo,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, CheckpointError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
