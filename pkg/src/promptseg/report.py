"""Report rendering: metric JSON/CSV alongside matplotlib figures.

Figures are written non-interactively (Agg) with fixed metadata so repeated
runs produce identical files.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import IoUReport  # noqa: E402

PathLike = Union[str, Path]

_PNG_METADATA = {"Software": "promptseg"}


def _save_figure(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def write_metrics_report(path: PathLike, report: IoUReport) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_per_class_csv(path: PathLike, report: IoUReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "iou"])
        for name, value in report.per_class.items():
            writer.writerow([name, f"{value:.2f}"])
        writer.writerow(["ch_iou", f"{report.ch_iou:.2f}"])
        writer.writerow(["isi_iou", f"{report.isi_iou:.2f}"])
        writer.writerow(["mc_iou", f"{report.mc_iou:.2f}"])


def plot_per_class_iou(path: PathLike, report: IoUReport, title: str = "per-class IoU") -> None:
    names = list(report.per_class)
    values = [report.per_class[n] for n in names]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(names)), 3.2))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.axhline(report.ch_iou, color="#a84848", linestyle="--", linewidth=1,
               label=f"challenge IoU {report.ch_iou:.1f}")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylim(0, 105)
    ax.set_ylabel("IoU (%)")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    _save_figure(fig, Path(path))


def plot_training_curves(path: PathLike, logs: Sequence) -> None:
    """logs: EpochLog sequence (epoch, lr, loss_seg, loss_rec, val_ch_iou)."""
    epochs = [entry.epoch for entry in logs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    ax1.plot(epochs, [e.loss_seg for e in logs], label="segmentation", color="#4878a8")
    ax1.plot(epochs, [e.loss_rec for e in logs], label="reconstruction", color="#a87848")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.set_yscale("log")
    ax1.legend(fontsize=8)
    ax1.set_title("training losses")
    ax2.plot(epochs, [e.val_ch_iou for e in logs], color="#48a878")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("val challenge IoU (%)")
    ax2.set_ylim(0, 105)
    ax2.set_title("validation")
    fig.tight_layout()
    _save_figure(fig, Path(path))


def plot_reconstruction_panel(path: PathLike, triplets: Sequence[tuple], ids: Sequence[str]) -> None:
    """triplets: (input, masked preview, reconstruction) HxWx3 float arrays."""
    rows = len(triplets)
    fig, axes = plt.subplots(rows, 3, figsize=(6.4, 2.2 * rows), squeeze=False)
    column_names = ("input", "masked", "reconstruction")
    for r, (triplet, image_id) in enumerate(zip(triplets, ids)):
        for c in range(3):
            ax = axes[r][c]
            ax.imshow(triplet[c].clip(0.0, 1.0))
            ax.set_xticks(())
            ax.set_yticks(())
            if r == 0:
                ax.set_title(column_names[c], fontsize=9)
            if c == 0:
                ax.set_ylabel(image_id, fontsize=8)
    fig.tight_layout()
    _save_figure(fig, Path(path))


def write_ablation_table(json_path: PathLike, text_path: PathLike,
                         rows: Sequence[dict]) -> None:
    """rows: {variant, ch_iou, isi_iou} dicts, one per trained variant."""
    Path(json_path).parent.mkdir(parents=True, exist_ok=True)
    payload = [
        {"variant": r["variant"], "ch_iou": round(r["ch_iou"], 2),
         "isi_iou": round(r["isi_iou"], 2)}
        for r in rows
    ]
    Path(json_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")
    width = max(len("variant"), *(len(r["variant"]) for r in rows)) + 2
    lines = [f"{'variant':<{width}}{'ch_iou':>8}{'isi_iou':>9}",
             "-" * (width + 17)]
    for r in rows:
        lines.append(f"{r['variant']:<{width}}{r['ch_iou']:>8.2f}{r['isi_iou']:>9.2f}")
    Path(text_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def plot_ablation_table(path: PathLike, rows: Sequence[dict]) -> None:
    names = [r["variant"] for r in rows]
    x = range(len(names))
    fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(names)), 3.2))
    ax.bar([i - 0.18 for i in x], [r["ch_iou"] for r in rows], width=0.36,
           label="challenge IoU", color="#4878a8")
    ax.bar([i + 0.18 for i in x], [r["isi_iou"] for r in rows], width=0.36,
           label="image-set IoU", color="#a87848")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylim(0, 105)
    ax.set_ylabel("IoU (%)")
    ax.legend(fontsize=8)
    ax.set_title("ablation comparison")
    fig.tight_layout()
    _save_figure(fig, Path(path))
