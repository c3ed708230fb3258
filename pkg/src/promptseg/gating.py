"""Prompt-mixture fusion: a visual-textual gating network scores each prompt
per pixel, a softmax across prompts normalizes the scores, and the per-prompt
probability maps are blended by weighted sum."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import init_transformer_weights


class VisualTextualGating(nn.Module):
    """Three convolution layers with residual shortcuts over the concatenated
    visual grid and broadcast text feature; emits one logit map per prompt.

    Parameters are shared across prompts (and classes); only the text feature
    changes per prompt, so the module stays prompt-count-agnostic.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(2 * dim, dim, kernel_size=3, padding=1)
        self.shortcut1 = nn.Conv2d(2 * dim, dim, kernel_size=1)
        self.conv2 = nn.Conv2d(dim, dim, kernel_size=3, padding=1)
        self.head = nn.Conv2d(dim, 1, kernel_size=3, padding=1)
        self.apply(init_transformer_weights)

    def logit_map(self, visual_grid: torch.Tensor, text_feature: torch.Tensor) -> torch.Tensor:
        """visual_grid (B, D, h, w), text_feature (B, D) -> logits (B, 1, h, w)."""
        if visual_grid.shape[1] != text_feature.shape[1]:
            raise ValueError(
                f"feature dim mismatch: visual {visual_grid.shape[1]} vs text {text_feature.shape[1]}"
            )
        b, _, h, w = visual_grid.shape
        text = text_feature[:, :, None, None].expand(-1, -1, h, w)
        x = torch.cat([visual_grid, text], dim=1)
        y = F.relu(self.conv1(x) + self.shortcut1(x))
        y = F.relu(self.conv2(y) + y)
        return self.head(y)


def gating_weights_from_logits(logits: torch.Tensor, out_size: int,
                               granularity: str = "pixel") -> torch.Tensor:
    """Normalize per-prompt logit maps into weights summing to 1 per pixel.

    logits: (B, P, h, w) at token resolution. Pixel granularity upsamples the
    logits bilinearly before the softmax across prompts; image granularity
    averages each map to a scalar first, giving one weight per prompt.
    """
    b, p, _, _ = logits.shape
    if granularity == "image":
        scalars = logits.mean(dim=(-2, -1))
        weights = torch.softmax(scalars, dim=1)
        return weights[:, :, None, None].expand(b, p, out_size, out_size)
    if granularity != "pixel":
        raise ValueError(f"unknown gating granularity {granularity!r}")
    full = F.interpolate(logits, size=(out_size, out_size), mode="bilinear", align_corners=False)
    return torch.softmax(full, dim=1)


def compute_gating_weights(gating: VisualTextualGating, visual_grid: torch.Tensor,
                           text_features: torch.Tensor, out_size: int,
                           granularity: str = "pixel") -> torch.Tensor:
    """visual_grid (B, D, h, w), text_features (B, P, D) -> weights (B, P, H, W)."""
    b, p, _ = text_features.shape
    maps = [gating.logit_map(visual_grid, text_features[:, i]) for i in range(p)]
    logits = torch.cat(maps, dim=1)
    return gating_weights_from_logits(logits, out_size, granularity=granularity)


def fuse_score_maps(score_maps: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Convex combination across prompts: (B, P, H, W) x (B, P, H, W) -> (B, H, W)."""
    if score_maps.shape != weights.shape:
        raise ValueError(
            f"shape mismatch: score maps {tuple(score_maps.shape)} vs weights {tuple(weights.shape)}"
        )
    return (score_maps * weights).sum(dim=1)
