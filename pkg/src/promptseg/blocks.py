"""Shared transformer building blocks: multi-head attention, feed-forward,
and the pre-norm encoder block used by both encoders and the reconstruction
decoder."""
from __future__ import annotations

from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F


class MultiHeadAttention(nn.Module):
    """Multi-head attention with separate query/key/value projections.

    Supports self-attention (query is key is value) and cross-attention.
    `key_valid` marks key positions that may receive attention; invalid keys
    get exactly zero weight (additive -inf before the softmax).
    """

    def __init__(self, dim: int, num_heads: int = 4):
        super().__init__()
        if dim % num_heads != 0:
            raise ValueError(f"dim {dim} not divisible by num_heads {num_heads}")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim**-0.5
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def forward(
        self,
        query: torch.Tensor,
        key: torch.Tensor,
        value: torch.Tensor,
        key_valid: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        b, nq, d = query.shape
        nk = key.shape[1]
        q = self.q_proj(query).reshape(b, nq, self.num_heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(key).reshape(b, nk, self.num_heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(value).reshape(b, nk, self.num_heads, self.head_dim).transpose(1, 2)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        if key_valid is not None:
            bad = ~key_valid.bool().reshape(b, 1, 1, nk)
            attn = attn.masked_fill(bad, float("-inf"))
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, nq, d)
        return self.out_proj(out)


class FeedForward(nn.Module):
    """Two-layer position-wise MLP with GELU, hidden width 4x."""

    def __init__(self, dim: int, hidden_mult: int = 4):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden_mult * dim)
        self.fc2 = nn.Linear(hidden_mult * dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block: x + SA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, dim: int, num_heads: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim)

    def forward(self, x: torch.Tensor, key_valid: Optional[torch.Tensor] = None) -> torch.Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, h, key_valid=key_valid)
        x = x + self.ffn(self.norm2(x))
        return x


def init_transformer_weights(module: nn.Module) -> None:
    """Truncated-normal linear weights, zero biases, unit layer norms."""
    if isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Conv2d):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
