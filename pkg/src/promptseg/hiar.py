"""Hard-area-mined masked reconstruction, active during training only.

Patches where the current prediction disagrees with ground truth are marked
hard; random unmasking/masking brings the masked fraction to the configured
target ratio. The shared image encoder then processes only visible patches,
and a light transformer decoder with a learned mask token restores the full
grid for pixel reconstruction.
"""
from __future__ import annotations

import math

import torch
import torch.nn as nn

from .blocks import TransformerBlock, init_transformer_weights
from .imageenc import ImageEncoder

REC_LAYERS = 2
REC_HEADS = 4


def target_mask_count(ratio: float, total: int) -> int:
    """Number of masked patches a ratio maps to: floor(r * total + 0.5)."""
    return int(math.floor(ratio * total + 0.5))


def mine_hard_patches(pred_mask: torch.Tensor, gt_mask: torch.Tensor,
                      patch_size: int) -> tuple[torch.Tensor, float]:
    """Patch-level error mining.

    A patch is hard iff any pixel in its p x p block is mispredicted. Returns
    the (h, w) boolean grid and the raw hard ratio.
    """
    if pred_mask.shape != gt_mask.shape:
        raise ValueError(
            f"shape mismatch: prediction {tuple(pred_mask.shape)} vs truth {tuple(gt_mask.shape)}"
        )
    height, width = pred_mask.shape[-2:]
    if height % patch_size or width % patch_size:
        raise ValueError(f"mask dims {height}x{width} not divisible by patch size {patch_size}")
    errors = pred_mask != gt_mask
    h, w = height // patch_size, width // patch_size
    blocks = errors.reshape(h, patch_size, w, patch_size)
    hard = blocks.any(dim=3).any(dim=1)
    ratio = hard.sum().item() / hard.numel()
    return hard, ratio


def adjust_to_ratio(hard: torch.Tensor, target_ratio: float, generator: torch.Generator,
                    use_hard_areas: bool = True) -> torch.Tensor:
    """Grow or shrink the hard set to exactly `target_mask_count` patches.

    Shrinking keeps a random subset of hard patches; growing adds random
    non-hard ones, so hard patches always take priority. With
    `use_hard_areas=False` the hard set is ignored and the mask is uniform
    random at the target count.
    """
    if not 0.0 < target_ratio < 1.0:
        raise ValueError(f"target ratio must lie in (0, 1), got {target_ratio}")
    flat = hard.reshape(-1)
    total = flat.numel()
    target = target_mask_count(target_ratio, total)
    out = torch.zeros_like(flat)
    if not use_hard_areas:
        order = torch.randperm(total, generator=generator)
        out[order[:target]] = True
        return out.reshape(hard.shape)
    hard_idx = torch.nonzero(flat, as_tuple=False).reshape(-1)
    if hard_idx.numel() > target:
        keep = torch.randperm(hard_idx.numel(), generator=generator)[:target]
        out[hard_idx[keep]] = True
    else:
        out[hard_idx] = True
        extra = target - hard_idx.numel()
        if extra > 0:
            easy_idx = torch.nonzero(~flat, as_tuple=False).reshape(-1)
            pick = torch.randperm(easy_idx.numel(), generator=generator)[:extra]
            out[easy_idx[pick]] = True
    return out.reshape(hard.shape)


class ReconstructionDecoder(nn.Module):
    """Transformer decoder restoring masked patch tokens to pixel values."""

    def __init__(self, dim: int, num_tokens: int, patch_size: int,
                 num_layers: int = REC_LAYERS, num_heads: int = REC_HEADS):
        super().__init__()
        self.dim = dim
        self.num_tokens = num_tokens
        self.patch_size = patch_size
        self.mask_token = nn.Parameter(torch.zeros(1, 1, dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, num_tokens, dim))
        self.blocks = nn.ModuleList(TransformerBlock(dim, num_heads) for _ in range(num_layers))
        self.norm = nn.LayerNorm(dim)
        self.head = nn.Linear(dim, patch_size * patch_size * 3)
        self.apply(init_transformer_weights)
        nn.init.trunc_normal_(self.mask_token, std=0.02)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)

    def forward(self, visible_tokens: torch.Tensor, visible_index: torch.Tensor,
                grid: int) -> torch.Tensor:
        """visible_tokens (B, Nv, D) at positions visible_index (B, Nv) -> (B, 3, H, W)."""
        b = visible_tokens.shape[0]
        full = self.mask_token.expand(b, self.num_tokens, self.dim).clone()
        full.scatter_(1, visible_index.unsqueeze(-1).expand(-1, -1, self.dim), visible_tokens)
        x = full + self.pos_embed
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        pixels = self.head(x)  # (B, N, p*p*3)
        p = self.patch_size
        pixels = pixels.reshape(b, grid, grid, p, p, 3)
        pixels = pixels.permute(0, 5, 1, 3, 2, 4).reshape(b, 3, grid * p, grid * p)
        return pixels


def reconstruct(images: torch.Tensor, patch_mask: torch.Tensor, encoder: ImageEncoder,
                decoder: ReconstructionDecoder) -> torch.Tensor:
    """Encode visible patches only and decode the full image.

    images: (B, 3, H, W); patch_mask: (B, N) booleans, True = masked. Every
    sample must mask the same number of patches (the ratio adjustment
    guarantees this) and leave at least one patch visible.
    """
    b, n = patch_mask.shape
    counts = (~patch_mask).sum(dim=1)
    if (counts == 0).any():
        raise ValueError("at least one visible patch is required per sample")
    if not (counts == counts[0]).all():
        raise ValueError("per-sample visible counts must agree for batched reconstruction")
    visible_index = (
        torch.nonzero(~patch_mask, as_tuple=False)[:, 1].reshape(b, int(counts[0].item()))
    )
    feats = encoder.forward_visible(images, visible_index)
    return decoder(feats, visible_index, encoder.grid)


def masked_image_preview(image: torch.Tensor, patch_mask: torch.Tensor, patch_size: int,
                         fill: float = 0.5) -> torch.Tensor:
    """Gray out masked patches for visualization. image (3, H, W), mask (h, w)."""
    preview = image.clone()
    up = patch_mask.repeat_interleave(patch_size, dim=0).repeat_interleave(patch_size, dim=1)
    preview[:, up] = fill
    return preview
