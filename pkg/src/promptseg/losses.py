"""Training losses and multi-class mask assembly.

Both losses use mean reduction so the loss weight and learning rate stay
independent of image size; scores are clamped away from {0, 1} before the
log terms.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

SCORE_EPS = 1e-7


@dataclass
class LossBreakdown:
    seg: float
    rec: float
    total: float


def seg_loss(scores: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Binary cross entropy between a probability map and a {0,1} target."""
    if scores.shape != target.shape:
        raise ValueError(
            f"shape mismatch: scores {tuple(scores.shape)} vs target {tuple(target.shape)}"
        )
    s = scores.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
    t = target.to(s.dtype)
    return -(t * torch.log(s) + (1.0 - t) * torch.log(1.0 - s)).mean()


def rec_loss(reconstruction: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
    """Mean squared pixel distance over all positions and channels."""
    if reconstruction.shape != image.shape:
        raise ValueError(
            f"shape mismatch: reconstruction {tuple(reconstruction.shape)} vs image {tuple(image.shape)}"
        )
    return ((reconstruction - image) ** 2).mean()


def combined_loss(seg: torch.Tensor, rec: torch.Tensor, weight: float) -> torch.Tensor:
    return seg + weight * rec


def assemble_mask(score_maps: torch.Tensor, threshold: float) -> torch.Tensor:
    """Per-pixel class decision from per-class score maps.

    score_maps: (C, H, W) probabilities. Each pixel takes the argmax class
    (ties resolved to the smallest class index) when its best score reaches
    the threshold, else background 0. Class ids are 1-based.
    """
    if score_maps.ndim != 3:
        raise ValueError(f"expected (C, H, W) scores, got shape {tuple(score_maps.shape)}")
    best, idx = score_maps.max(dim=0)
    # torch.max returns the first maximal index, giving the smallest-class tie-break
    mask = (idx + 1).to(torch.long)
    mask[best < threshold] = 0
    return mask
