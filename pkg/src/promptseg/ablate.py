"""Ablation harness: train and evaluate flag variants under a shared seed and
emit a comparison table."""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence, Union

from .config import ModelConfig
from .metrics import evaluate_masks
from .synthdata import load_dataset, load_split
from .train import Trainer

PathLike = Union[str, Path]

# named variants mirroring the flag matrix; "full" is the unmodified config
PRESET_VARIANTS: dict[str, dict] = {
    "full": {},
    "no_msfa": {"msfa": False},
    "words_pooling": {"cls_token_pooling": False},
    "ap_only": {"conv_prompting": False},
    "cp_only": {"attention_prompting": False},
    "single_prompt": {"mop": False},
    "no_hiar": {"hiar": False},
    "no_ham": {"ham": False},
    "image_gating": {"gating_granularity": "image"},
    "rt_0.1": {"mask_ratio_threshold": 0.1},
    "rt_0.25": {"mask_ratio_threshold": 0.25},
    "rt_0.5": {"mask_ratio_threshold": 0.5},
}


def resolve_variants(names: Sequence[str]) -> dict[str, dict]:
    variants = {}
    for name in names:
        if name not in PRESET_VARIANTS:
            raise ValueError(
                f"unknown variant {name!r}; available: {', '.join(sorted(PRESET_VARIANTS))}"
            )
        variants[name] = PRESET_VARIANTS[name]
    return variants


def validate_overrides(config: ModelConfig, overrides: dict) -> ModelConfig:
    variant = config.with_overrides(**overrides)
    if not (variant.attention_prompting or variant.conv_prompting):
        raise ValueError(
            "contradictory flags: at least one prompting path must stay enabled"
        )
    return variant


def ablation_run(
    config: ModelConfig,
    variants: dict[str, dict],
    data_dir: PathLike,
    seeds: Sequence[int] = (0,),
    eval_split: str = "val",
    out_dir: Optional[PathLike] = None,
) -> list[dict]:
    """Train each variant per seed and evaluate on the chosen split.

    Returns one row per variant with seed-averaged challenge / image-set IoU.
    """
    samples, classes = load_dataset(data_dir)
    try:
        split = load_split(data_dir)
    except Exception:
        split = None
    rows = []
    for name, overrides in variants.items():
        variant_cfg = validate_overrides(config, overrides)
        ch_values, isi_values = [], []
        for seed in seeds:
            trainer = Trainer(variant_cfg, samples, classes, split=split, seed=seed)
            run_out = Path(out_dir) / f"{name}_seed{seed}" if out_dir else None
            trainer.run(out_dir=run_out)
            if eval_split == "val" and trainer.val_samples:
                subset = trainer.val_samples
            elif eval_split == "train":
                subset = trainer.train_samples
            else:
                subset = samples
            preds, gts, ids = trainer.predict_masks(subset)
            report = evaluate_masks(preds, gts, variant_cfg.num_classes,
                                    class_names=[c.name for c in classes], image_ids=ids)
            ch_values.append(report.ch_iou)
            isi_values.append(report.isi_iou)
        rows.append(
            {
                "variant": name,
                "ch_iou": sum(ch_values) / len(ch_values),
                "isi_iou": sum(isi_values) / len(isi_values),
                "per_seed_ch_iou": ch_values,
            }
        )
    return rows
