"""Training loop: prompt-supervised segmentation plus the reconstruction
auxiliary, Adam updates with a step learning-rate drop, per-epoch validation,
and best-checkpoint retention. The text encoder stays frozen throughout."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import ModelConfig, config_to_dict
from .hiar import adjust_to_ratio, mine_hard_patches, reconstruct
from .losses import assemble_mask, combined_loss, rec_loss, seg_loss
from .metrics import evaluate_masks
from .model import build_model, samples_to_tensor, set_determinism
from .prompts import PromptBundle
from .synthdata import ClassSpec, ImageSample, load_dataset, load_split
from .vocab import build_vocab

PathLike = Union[str, Path]

NEGATIVE_EVERY = 4  # every 4th step also supervises one absent class per sample


@dataclass
class EpochLog:
    epoch: int
    lr: float
    loss_seg: float
    loss_rec: float
    val_ch_iou: float

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "loss_seg": round(self.loss_seg, 6),
            "loss_rec": round(self.loss_rec, 6),
            "val_ch_iou": round(self.val_ch_iou, 2),
        }


@dataclass
class TrainResult:
    checkpoint_path: Optional[Path]
    logs: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_val_ch_iou: float = 0.0


def vocab_corpus(classes: list[ClassSpec]) -> list[str]:
    corpus = []
    for spec in classes:
        corpus.extend(spec.prompts)
    return corpus


def learning_rate_for_epoch(base_lr: float, epoch: int, total_epochs: int) -> float:
    """Step schedule: x0.1 from 70% of the run onward (1-based epochs)."""
    drop_at = math.ceil(0.7 * total_epochs)
    return base_lr * 0.1 if epoch >= drop_at and total_epochs > 1 else base_lr


def _pick_class(present: list[int], num_classes: int, generator: torch.Generator) -> int:
    """One ground-truth-present class, or any class for background-only images."""
    pool = present if present else list(range(1, num_classes + 1))
    idx = int(torch.randint(len(pool), (1,), generator=generator).item())
    return pool[idx]


def _pick_absent(present: list[int], num_classes: int,
                 generator: torch.Generator) -> Optional[int]:
    absent = [c for c in range(1, num_classes + 1) if c not in present]
    if not absent:
        return None
    idx = int(torch.randint(len(absent), (1,), generator=generator).item())
    return absent[idx]


class Trainer:
    def __init__(self, config: ModelConfig, samples: list[ImageSample],
                 classes: list[ClassSpec], split: Optional[dict] = None,
                 seed: Optional[int] = None,
                 bundles: Optional[list[PromptBundle]] = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        set_determinism(self.seed)
        self.classes = classes
        # default prompts come straight from the dataset manifest; callers may
        # pass bundles built from other acquisition sources instead
        self.bundles = bundles if bundles is not None else [
            PromptBundle(spec.class_id, spec.name, tuple(spec.prompts)) for spec in classes
        ]
        corpus = vocab_corpus(classes)
        for bundle in self.bundles:
            corpus.extend(bundle.prompts)
        self.vocab = build_vocab(corpus)
        self.model = build_model(config, self.vocab, seed=self.seed)
        self.generator = torch.Generator().manual_seed(self.seed + 1)
        trainable = [p for p in self.model.parameters() if p.requires_grad]
        self.optimizer = torch.optim.Adam(trainable, lr=config.learning_rate)

        by_id = {s.image_id: s for s in samples}
        if split:
            self.train_samples = [by_id[i] for i in split.get("train", []) if i in by_id]
            self.val_samples = [by_id[i] for i in split.get("val", []) if i in by_id]
        else:
            self.train_samples = list(samples)
            self.val_samples = []
        if not self.train_samples:
            raise ValueError("training split is empty")
        self.global_step = 0

    # ---- single step -------------------------------------------------------

    def _class_features(self) -> torch.Tensor:
        return self.model.bundle_features(self.bundles)

    def train_step(self, images: torch.Tensor, gt_masks: torch.Tensor,
                   class_features: torch.Tensor) -> tuple[float, float]:
        cfg = self.config
        b = images.shape[0]
        present_per_sample = [
            sorted(int(v) for v in torch.unique(gt_masks[i]) if v > 0) for i in range(b)
        ]
        # supervise every ground-truth-present class of each sample; images with
        # no foreground contribute one all-zero target for a random class
        pairs = []
        for i in range(b):
            if present_per_sample[i]:
                pairs.extend((i, c) for c in present_per_sample[i])
            else:
                pairs.append((i, _pick_class([], cfg.num_classes, self.generator)))
        if self.global_step % NEGATIVE_EVERY == NEGATIVE_EVERY - 1:
            for i in range(b):
                absent = _pick_absent(present_per_sample[i], cfg.num_classes, self.generator)
                if absent is not None:
                    pairs.append((i, absent))
        visual = self.model.encode_image(images)
        rows = [i for i, _ in pairs]
        feats = torch.stack([class_features[c - 1] for _, c in pairs])
        fused, _, _ = self.model.decode_class(visual[rows], feats)
        targets = torch.stack([(gt_masks[i] == c).float() for i, c in pairs])
        loss_seg = seg_loss(fused, targets)

        loss_rec = torch.zeros((), dtype=images.dtype)
        if cfg.hiar:
            with torch.no_grad():
                scores = self.model.score_classes(images, class_features)
                patch_masks = []
                for i in range(b):
                    pred = assemble_mask(scores[i], cfg.threshold)
                    hard, _ = mine_hard_patches(pred, gt_masks[i], cfg.patch_size)
                    patch_masks.append(
                        adjust_to_ratio(hard, cfg.mask_ratio_threshold, self.generator,
                                        use_hard_areas=cfg.ham).reshape(-1)
                    )
                patch_mask = torch.stack(patch_masks)
            recon = reconstruct(images, patch_mask, self.model.image_encoder,
                                self.model.rec_decoder)
            loss_rec = rec_loss(recon, images)

        if not torch.isfinite(loss_seg):
            raise RuntimeError("non-finite segmentation loss")
        if not torch.isfinite(loss_rec):
            raise RuntimeError("non-finite reconstruction loss")
        total = combined_loss(loss_seg, loss_rec, cfg.loss_weight)
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        self.global_step += 1
        return float(loss_seg.item()), float(loss_rec.item())

    # ---- evaluation ----------------------------------------------------------

    @torch.no_grad()
    def evaluate(self, samples: list[ImageSample]) -> float:
        """Challenge IoU of current predictions over a sample list."""
        if not samples:
            return 0.0
        preds, gts, ids = self.predict_masks(samples)
        report = evaluate_masks(preds, gts, self.config.num_classes, image_ids=ids)
        return report.ch_iou

    @torch.no_grad()
    def predict_masks(self, samples: list[ImageSample]):
        self.model.eval()
        feats = self._class_features()
        preds, gts, ids = [], [], []
        bs = self.config.batch_size
        for start in range(0, len(samples), bs):
            chunk = samples[start : start + bs]
            images = samples_to_tensor(chunk)
            scores = self.model.score_classes(images, feats)
            for i, sample in enumerate(chunk):
                mask = assemble_mask(scores[i], self.config.threshold)
                preds.append(mask.numpy().astype(np.uint8))
                gts.append(sample.mask)
                ids.append(sample.image_id)
        self.model.train()
        return preds, gts, ids

    # ---- full run ------------------------------------------------------------

    def run(self, out_dir: Optional[PathLike] = None,
            checkpoint_name: str = "checkpoint.psck") -> TrainResult:
        cfg = self.config
        out = Path(out_dir) if out_dir is not None else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)

        class_features = self._class_features()
        n = len(self.train_samples)
        logs: list[EpochLog] = []
        best_val = -1.0
        best_epoch = 0
        best_state = None

        self.model.train()
        for epoch in range(1, cfg.epochs + 1):
            lr = learning_rate_for_epoch(cfg.learning_rate, epoch, cfg.epochs)
            for group in self.optimizer.param_groups:
                group["lr"] = lr
            order = torch.randperm(n, generator=self.generator).tolist()
            seg_sum = rec_sum = 0.0
            steps = 0
            for start in range(0, n, cfg.batch_size):
                batch = [self.train_samples[i] for i in order[start : start + cfg.batch_size]]
                images = samples_to_tensor(batch)
                gt = torch.stack([torch.from_numpy(s.mask.astype(np.int64)) for s in batch])
                s, r = self.train_step(images, gt, class_features)
                seg_sum += s
                rec_sum += r
                steps += 1
            val_ch = self.evaluate(self.val_samples) if self.val_samples else 0.0
            logs.append(EpochLog(epoch=epoch, lr=lr, loss_seg=seg_sum / steps,
                                 loss_rec=rec_sum / steps, val_ch_iou=val_ch))
            improved = val_ch >= best_val if self.val_samples else True
            if improved:
                best_val = val_ch
                best_epoch = epoch
                best_state = {
                    k: v.detach().clone() for k, v in self.model.state_dict().items()
                }

        # the model keeps its final weights; the retained checkpoint file is
        # the best-validation snapshot (final state when there is no val split)
        checkpoint_path = None
        if out is not None:
            checkpoint_path = out / checkpoint_name
            snapshot = PromptSegModel(cfg, self.vocab)
            snapshot.load_state_dict(best_state if best_state is not None
                                     else self.model.state_dict())
            save_checkpoint(
                checkpoint_path,
                snapshot,
                config_to_dict(cfg),
                self.vocab,
                epoch=best_epoch,
                extra_meta={"best_val_ch_iou": best_val if self.val_samples else None,
                            "seed": self.seed},
            )
            (out / "vocab.json").write_text(
                json.dumps(self.vocab, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            with open(out / "log.jsonl", "w", encoding="utf-8") as fh:
                for entry in logs:
                    fh.write(json.dumps(entry.as_dict(), sort_keys=True) + "\n")
        return TrainResult(
            checkpoint_path=checkpoint_path,
            logs=logs,
            best_epoch=best_epoch,
            best_val_ch_iou=max(best_val, 0.0),
        )


def train_from_directory(config: ModelConfig, data_dir: PathLike,
                         out_dir: Optional[PathLike] = None,
                         seed: Optional[int] = None) -> TrainResult:
    samples, classes = load_dataset(data_dir)
    try:
        split = load_split(data_dir)
    except Exception:
        split = None
    if len(classes) != config.num_classes:
        config = config.with_overrides(num_classes=len(classes))
    trainer = Trainer(config, samples, classes, split=split, seed=seed)
    return trainer.run(out_dir=out_dir)
