"""Trainable ViT image encoder with intermediate layer taps and a top-down
multi-scale feature fusion over them."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import TransformerBlock, init_transformer_weights

IMAGE_HEADS = 4


class ImageEncoder(nn.Module):
    """Patch embedding plus a pre-norm transformer stack.

    The forward pass returns the token grids after layers L/3, 2L/3 and L
    (post-block, before any final normalization); the fusion module combines
    them into the visual feature. The reconstruction branch reuses the same
    stack on visible tokens only via `forward_visible`.
    """

    def __init__(self, image_size: int, patch_size: int, dim: int, num_layers: int,
                 num_heads: int = IMAGE_HEADS):
        super().__init__()
        if image_size % patch_size != 0:
            raise ValueError(f"image_size {image_size} not divisible by patch_size {patch_size}")
        if num_layers % 3 != 0:
            raise ValueError(f"num_layers must be a multiple of 3, got {num_layers}")
        self.image_size = image_size
        self.patch_size = patch_size
        self.grid = image_size // patch_size
        self.num_tokens = self.grid * self.grid
        self.dim = dim
        third = num_layers // 3
        self.tap_layers = (third, 2 * third, num_layers)
        self.patch_embed = nn.Conv2d(3, dim, kernel_size=patch_size, stride=patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, self.num_tokens, dim))
        self.blocks = nn.ModuleList(TransformerBlock(dim, num_heads) for _ in range(num_layers))
        # applied to the fused visual feature, after the taps (taps stay pre-norm)
        self.final_norm = nn.LayerNorm(dim)
        self.apply(init_transformer_weights)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)

    def patchify(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> token grid (B, N, D) with positional embedding added.

        Pixel values in [0, 1] are shifted to [-1, 1] before embedding.
        """
        if images.shape[-2:] != (self.image_size, self.image_size):
            raise ValueError(
                f"expected {self.image_size}x{self.image_size} input, got {tuple(images.shape[-2:])}"
            )
        x = self.patch_embed(2.0 * images - 1.0)  # (B, D, h, w)
        x = x.flatten(2).transpose(1, 2)
        return x + self.pos_embed

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        x = self.patchify(images)
        taps = []
        for layer, block in enumerate(self.blocks, start=1):
            x = block(x)
            if layer in self.tap_layers:
                taps.append(x)
        for tap in taps:
            if not torch.isfinite(tap).all():
                raise FloatingPointError("non-finite activation in image encoder")
        return tuple(taps)

    def forward_visible(self, images: torch.Tensor, visible_index: torch.Tensor) -> torch.Tensor:
        """Run the stack on a subset of tokens (absolute positions preserved).

        visible_index: (B, Nv) long indices into the token grid.
        """
        x = self.patchify(images)
        x = torch.gather(x, 1, visible_index.unsqueeze(-1).expand(-1, -1, self.dim))
        for block in self.blocks:
            x = block(x)
        return x


class MultiScaleFusion(nn.Module):
    """Three-level top-down fusion of the encoder taps.

    The earliest tap is upsampled x2, the last tap average-pooled x2, and the
    middle tap kept at the native token resolution. Each level passes through
    a 1x1 lateral projection; coarser levels are upsampled and projected into
    finer ones by element-wise addition. The level at the native resolution
    is returned as the fused visual feature.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.lateral_fine = nn.Conv2d(dim, dim, kernel_size=1)
        self.lateral_mid = nn.Conv2d(dim, dim, kernel_size=1)
        self.lateral_coarse = nn.Conv2d(dim, dim, kernel_size=1)
        self.top_down_mid = nn.Conv2d(dim, dim, kernel_size=1)
        self.top_down_fine = nn.Conv2d(dim, dim, kernel_size=1)
        self.apply(init_transformer_weights)

    def pyramid(self, taps: tuple[torch.Tensor, ...], grid: int) -> dict[str, torch.Tensor]:
        """Merged levels at 2g x 2g ("fine"), g x g ("mid"), g/2 x g/2 ("coarse")."""
        early, middle, last = taps
        if grid % 2 != 0:
            raise ValueError(f"token grid side {grid} must be even for multi-scale fusion")
        b, _, d = middle.shape
        def to_grid(t):
            return t.transpose(1, 2).reshape(b, d, grid, grid)
        fine_in = F.interpolate(to_grid(early), scale_factor=2, mode="nearest")
        mid_in = to_grid(middle)
        coarse_in = F.avg_pool2d(to_grid(last), kernel_size=2)

        p_coarse = self.lateral_coarse(coarse_in)
        p_mid = self.lateral_mid(mid_in) + self.top_down_mid(
            F.interpolate(p_coarse, scale_factor=2, mode="nearest")
        )
        p_fine = self.lateral_fine(fine_in) + self.top_down_fine(
            F.interpolate(p_mid, scale_factor=2, mode="nearest")
        )
        return {"fine": p_fine, "mid": p_mid, "coarse": p_coarse}

    def forward(self, taps: tuple[torch.Tensor, ...], grid: int, enabled: bool = True) -> torch.Tensor:
        """taps: three (B, N, D) tensors -> fused (B, N, D).

        The level at the native token resolution carries the fused feature;
        with fusion disabled the last tap passes through unchanged.
        """
        if not enabled:
            return taps[2]
        b, n, d = taps[1].shape
        p_mid = self.pyramid(taps, grid)["mid"]
        return p_mid.reshape(b, d, n).transpose(1, 2)
