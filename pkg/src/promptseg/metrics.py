"""IoU metric suite over class-index masks.

Three aggregates with different averaging structure:

- challenge IoU: per image, mean IoU over classes present in the ground
  truth; images with an empty ground truth are skipped; mean over images.
- image-set IoU: per image, mean IoU over the union of ground-truth-present
  and predicted classes (spurious predictions count as zeros); mean over
  images whose union is nonempty.
- mean-class IoU: per class, mean IoU over the images where the class occurs
  in that union; mean over classes that occur at least once.

Degenerate conventions: the IoU of two empty masks is 1 (vacuous agreement),
of one empty mask 0; classes absent from every image and prediction are
excluded from the class mean. All results are percentages.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

CONVENTIONS = (
    "IoU(empty, empty) = 1; IoU with exactly one empty mask = 0; "
    "images with empty ground truth are skipped by the challenge mean; "
    "classes never present in ground truth or prediction are excluded from the class mean"
)


@dataclass
class IoUReport:
    ch_iou: float
    isi_iou: float
    mc_iou: float
    per_class: dict[str, float]
    per_image: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "ch_iou": round(self.ch_iou, 2),
            "isi_iou": round(self.isi_iou, 2),
            "mc_iou": round(self.mc_iou, 2),
            "per_class": {name: round(v, 2) for name, v in self.per_class.items()},
            "per_image": [
                {k: (round(v, 2) if isinstance(v, float) else v) for k, v in row.items()}
                for row in self.per_image
            ],
            "conventions": CONVENTIONS,
        }


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of two binary masks."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    pred = pred.astype(bool)
    gt = gt.astype(bool)
    union = int(np.logical_or(pred, gt).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(pred, gt).sum())
    return inter / union


def _present(mask: np.ndarray, num_classes: int) -> set[int]:
    values = set(int(v) for v in np.unique(mask))
    values.discard(0)
    return {v for v in values if v <= num_classes}


def _check_inputs(predictions: Sequence[np.ndarray], ground_truths: Sequence[np.ndarray]) -> None:
    if len(predictions) != len(ground_truths):
        raise ValueError(
            f"got {len(predictions)} predictions for {len(ground_truths)} ground truths"
        )
    for pred, gt in zip(predictions, ground_truths):
        if pred.shape != gt.shape:
            raise ValueError(f"shape mismatch: prediction {pred.shape} vs truth {gt.shape}")


def evaluate_masks(
    predictions: Sequence[np.ndarray],
    ground_truths: Sequence[np.ndarray],
    num_classes: int,
    class_names: Optional[Sequence[str]] = None,
    image_ids: Optional[Sequence[str]] = None,
) -> IoUReport:
    """Score a dataset of class-index masks against ground truth."""
    _check_inputs(predictions, ground_truths)
    names = list(class_names) if class_names else [f"class_{c}" for c in range(1, num_classes + 1)]
    if len(names) != num_classes:
        raise ValueError(f"expected {num_classes} class names, got {len(names)}")
    ids = list(image_ids) if image_ids else [f"image_{i}" for i in range(len(predictions))]

    ch_values = []
    isi_values = []
    class_values: dict[int, list[float]] = {c: [] for c in range(1, num_classes + 1)}
    per_image = []

    for image_id, pred, gt in zip(ids, predictions, ground_truths):
        gt_classes = _present(gt, num_classes)
        pred_classes = _present(pred, num_classes)
        union_classes = gt_classes | pred_classes

        class_ious = {c: iou(pred == c, gt == c) for c in union_classes}
        for c, value in class_ious.items():
            class_values[c].append(value)

        row = {"id": image_id}
        if gt_classes:
            ch = float(np.mean([class_ious[c] for c in sorted(gt_classes)]))
            ch_values.append(ch)
            row["ch_iou"] = 100.0 * ch
        if union_classes:
            isi = float(np.mean([class_ious[c] for c in sorted(union_classes)]))
            isi_values.append(isi)
            row["isi_iou"] = 100.0 * isi
        per_image.append(row)

    ch_iou = 100.0 * float(np.mean(ch_values)) if ch_values else 0.0
    isi_iou = 100.0 * float(np.mean(isi_values)) if isi_values else 0.0
    class_means = {c: float(np.mean(v)) for c, v in class_values.items() if v}
    mc_iou = 100.0 * float(np.mean(list(class_means.values()))) if class_means else 0.0
    per_class = {names[c - 1]: 100.0 * class_means.get(c, 0.0) for c in range(1, num_classes + 1)}
    return IoUReport(ch_iou=ch_iou, isi_iou=isi_iou, mc_iou=mc_iou,
                     per_class=per_class, per_image=per_image)


def oracle_report(
    predictions: Sequence[np.ndarray],
    ground_truths: Sequence[np.ndarray],
    num_classes: int,
) -> tuple[float, float, float]:
    """Naive per-pixel recomputation of the three aggregates.

    Pure python set counting with no shared code or incremental accumulation;
    intended for small inputs as an independent cross-check.
    """
    _check_inputs(predictions, ground_truths)
    per_image_ch = []
    per_image_isi = []
    per_class_lists: dict[int, list[float]] = {}

    for pred, gt in zip(predictions, ground_truths):
        h, w = gt.shape
        gt_pixels: dict[int, set] = {}
        pred_pixels: dict[int, set] = {}
        for y in range(h):
            for x in range(w):
                g = int(gt[y, x])
                p = int(pred[y, x])
                if 0 < g <= num_classes:
                    gt_pixels.setdefault(g, set()).add((y, x))
                if 0 < p <= num_classes:
                    pred_pixels.setdefault(p, set()).add((y, x))
        union_classes = sorted(set(gt_pixels) | set(pred_pixels))
        scores = {}
        for c in union_classes:
            a = gt_pixels.get(c, set())
            b = pred_pixels.get(c, set())
            denom = len(a | b)
            scores[c] = 1.0 if denom == 0 else len(a & b) / denom
            per_class_lists.setdefault(c, []).append(scores[c])
        if gt_pixels:
            present = sorted(gt_pixels)
            per_image_ch.append(sum(scores[c] for c in present) / len(present))
        if union_classes:
            per_image_isi.append(sum(scores[c] for c in union_classes) / len(union_classes))

    ch = 100.0 * sum(per_image_ch) / len(per_image_ch) if per_image_ch else 0.0
    isi = 100.0 * sum(per_image_isi) / len(per_image_isi) if per_image_isi else 0.0
    class_means = [sum(v) / len(v) for _, v in sorted(per_class_lists.items())]
    mc = 100.0 * sum(class_means) / len(class_means) if class_means else 0.0
    return ch, isi, mc
