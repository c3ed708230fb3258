"""Frozen transformer text encoder producing one global feature per prompt.

Weights are drawn once from the ambient torch seed at construction and never
updated; a weight-loading hook (the checkpoint archive) covers users who want
to port external parameters. Padded positions are excluded from attention, so
the feature is independent of how much padding follows the content tokens.
"""
from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn

from .blocks import TransformerBlock, init_transformer_weights
from .vocab import MAX_TOKENS, TokenSequence

TEXT_LAYERS = 2
TEXT_HEADS = 4


class TextEncoder(nn.Module):
    """Small pre-norm transformer over word ids; pooled to a 1 x D feature.

    With `cls_pooling` the feature is the output at position 0; otherwise it
    is the mean over valid content positions (falling back to position 0 for
    prompts with no content tokens).
    """

    def __init__(
        self,
        vocab_size: int,
        dim: int,
        num_layers: int = TEXT_LAYERS,
        num_heads: int = TEXT_HEADS,
        max_len: int = MAX_TOKENS,
        cls_pooling: bool = True,
    ):
        super().__init__()
        self.vocab_size = vocab_size
        self.cls_pooling = cls_pooling
        self.token_embed = nn.Embedding(vocab_size, dim)
        self.pos_embed = nn.Parameter(torch.zeros(1, max_len, dim))
        self.blocks = nn.ModuleList(TransformerBlock(dim, num_heads) for _ in range(num_layers))
        self.final_norm = nn.LayerNorm(dim)
        self.apply(init_transformer_weights)
        nn.init.trunc_normal_(self.token_embed.weight, std=0.02)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.requires_grad_(False)  # frozen; training never touches these weights

    def forward(self, ids: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        """ids/valid: (B, T) -> feature (B, D)."""
        if ids.min() < 0 or ids.max() >= self.vocab_size:
            raise ValueError(
                f"token id out of range [0, {self.vocab_size}): {int(ids.min())}..{int(ids.max())}"
            )
        t = ids.shape[1]
        x = self.token_embed(ids) + self.pos_embed[:, :t]
        for block in self.blocks:
            x = block(x, key_valid=valid)
        x = self.final_norm(x)
        if self.cls_pooling:
            return x[:, 0]
        content = valid.clone()
        content[:, 0] = False  # pool words only, not the start token
        counts = content.sum(dim=1, keepdim=True)
        has_words = counts.squeeze(1) > 0
        mean = (x * content.unsqueeze(-1)).sum(dim=1) / counts.clamp(min=1)
        return torch.where(has_words.unsqueeze(-1), mean, x[:, 0])

    def encode_sequences(self, sequences: Sequence[TokenSequence]) -> torch.Tensor:
        ids = torch.tensor([s.ids for s in sequences], dtype=torch.long)
        valid = torch.tensor([s.valid for s in sequences], dtype=torch.bool)
        return self.forward(ids, valid)
