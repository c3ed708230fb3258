"""Text-promptable mask decoder.

Two stages: a stack of attention blocks lets the text feature steer the image
tokens globally (self-attention, cross-attention against the single text
token, feed-forward; pre-norm and residual around each), then the text feature
is mapped to the weights and bias of a small convolution that scores the token
grid locally. Logits are bilinearly upsampled to pixel resolution and passed
through a sigmoid, yielding a per-pixel probability map.
"""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import FeedForward, MultiHeadAttention, init_transformer_weights

DECODER_HEADS = 4


class PromptAttentionBlock(nn.Module):
    """One decoding block: x + SA(LN(x)); x + CA(LN(x), text); x + FFN(LN(x)).

    Cross-attention queries come from the image tokens; the lone text token
    supplies key and value (unnormalized, as received).
    """

    def __init__(self, dim: int, num_heads: int = DECODER_HEADS):
        super().__init__()
        self.norm_sa = nn.LayerNorm(dim)
        self.self_attn = MultiHeadAttention(dim, num_heads)
        self.norm_ca = nn.LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, num_heads)
        self.norm_ffn = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim)

    def forward(self, tokens: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        h = self.norm_sa(tokens)
        tokens = tokens + self.self_attn(h, h, h)
        tokens = tokens + self.cross_attn(self.norm_ca(tokens), text, text)
        tokens = tokens + self.ffn(self.norm_ffn(tokens))
        return tokens


class PromptedMaskDecoder(nn.Module):
    """Attention prompting followed by convolution prompting.

    `conv_kernel` must be odd; zero padding of (k-1)/2 keeps the grid size.
    Ablations: `attention_prompting=False` passes tokens through untouched;
    `conv_prompting=False` swaps the dynamic convolution for a per-token dot
    product against the text feature.
    """

    def __init__(self, dim: int, num_blocks: int = 3, conv_kernel: int = 1,
                 num_heads: int = DECODER_HEADS):
        super().__init__()
        if conv_kernel < 1 or conv_kernel % 2 == 0:
            raise ValueError(f"conv_kernel must be odd and >= 1, got {conv_kernel}")
        self.dim = dim
        self.conv_kernel = conv_kernel
        self.blocks = nn.ModuleList(
            PromptAttentionBlock(dim, num_heads) for _ in range(num_blocks)
        )
        self.text_to_conv = nn.Linear(dim, dim * conv_kernel * conv_kernel + 1)
        self.apply(init_transformer_weights)

    def attention_prompt(self, tokens: torch.Tensor, text_feature: torch.Tensor,
                         enabled: bool = True) -> torch.Tensor:
        """tokens (B, N, D), text_feature (B, D) -> prompted tokens (B, N, D)."""
        if tokens.shape[-1] != text_feature.shape[-1]:
            raise ValueError(
                f"feature dim mismatch: tokens {tokens.shape[-1]} vs text {text_feature.shape[-1]}"
            )
        if not enabled:
            return tokens
        text = text_feature.unsqueeze(1)
        for block in self.blocks:
            tokens = block(tokens, text)
        return tokens

    def conv_params(self, text_feature: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, D) -> dynamic kernel (B, D, k, k) and bias (B,)."""
        k = self.conv_kernel
        flat = self.text_to_conv(text_feature)
        weight = flat[:, : self.dim * k * k].reshape(-1, self.dim, k, k)
        bias = flat[:, -1]
        return weight, bias

    def conv_logits(self, grid: torch.Tensor, weight: torch.Tensor,
                    bias: torch.Tensor) -> torch.Tensor:
        """Per-sample dynamic convolution: grid (B, D, h, w) -> logits (B, 1, h, w)."""
        b, d, h, w = grid.shape
        k = self.conv_kernel
        out = F.conv2d(
            grid.reshape(1, b * d, h, w), weight, bias=bias, padding=(k - 1) // 2, groups=b
        )
        return out.reshape(b, 1, h, w)

    def score_logits(self, tokens: torch.Tensor, text_feature: torch.Tensor, grid: int,
                     conv_prompting: bool = True) -> torch.Tensor:
        """Prompted tokens (B, N, D) -> token-resolution logits (B, 1, g, g)."""
        b, n, d = tokens.shape
        if conv_prompting:
            grid_feat = tokens.transpose(1, 2).reshape(b, d, grid, grid)
            weight, bias = self.conv_params(text_feature)
            return self.conv_logits(grid_feat, weight, bias)
        dots = (tokens * text_feature.unsqueeze(1)).sum(dim=-1)
        return dots.reshape(b, 1, grid, grid)

    def forward(self, tokens: torch.Tensor, text_feature: torch.Tensor, grid: int,
                out_size: int, attention_prompting: bool = True,
                conv_prompting: bool = True) -> torch.Tensor:
        """Full decode to a probability map (B, H, W) in [0, 1]."""
        prompted = self.attention_prompt(tokens, text_feature, enabled=attention_prompting)
        logits = self.score_logits(prompted, text_feature, grid, conv_prompting=conv_prompting)
        logits = F.interpolate(logits, size=(out_size, out_size), mode="bilinear",
                               align_corners=False)
        return torch.sigmoid(logits.squeeze(1))
