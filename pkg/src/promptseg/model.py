"""Full segmenter assembly: encoders, prompted decoder, prompt-mixture gating,
and the reconstruction branch, wired behind a single predict path."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from .checkpoint import CheckpointError, arrays_to_state_dict, load_checkpoint
from .config import ModelConfig, config_from_dict
from .decoder import PromptedMaskDecoder
from .gating import VisualTextualGating, compute_gating_weights, fuse_score_maps
from .hiar import ReconstructionDecoder
from .imageenc import ImageEncoder, MultiScaleFusion
from .losses import assemble_mask
from .prompts import PromptBundle
from .textenc import TextEncoder
from .vocab import tokenize, vocab_size


def set_determinism(seed: int) -> None:
    """Single-threaded math and a fixed torch seed for reproducible runs."""
    torch.set_num_threads(1)
    torch.manual_seed(seed)


class PromptSegModel(nn.Module):
    """Text-promptable segmenter; all trainable state lives here.

    The text encoder is frozen at construction; everything else (image
    encoder, fusion, decoder, gating, reconstruction decoder) trains. Text
    features are cached per prompt string, which is sound because the text
    encoder never changes.
    """

    def __init__(self, config: ModelConfig, vocab: dict[str, int]):
        super().__init__()
        config.validate()
        if not (config.attention_prompting or config.conv_prompting):
            raise ValueError("at least one prompting path must stay enabled")
        if config.msfa and config.grid_size % 2 != 0:
            raise ValueError(
                f"token grid {config.grid_size} must be even for multi-scale fusion"
            )
        self.config = config
        self.vocab = vocab
        self.text_encoder = TextEncoder(
            vocab_size(vocab), config.feature_dim, cls_pooling=config.cls_token_pooling
        )
        self.image_encoder = ImageEncoder(
            config.image_size, config.patch_size, config.feature_dim, config.encoder_layers
        )
        self.fusion = MultiScaleFusion(config.feature_dim)
        self.decoder = PromptedMaskDecoder(
            config.feature_dim, num_blocks=config.decoder_blocks, conv_kernel=config.conv_kernel
        )
        self.gating = VisualTextualGating(config.feature_dim)
        self.rec_decoder = ReconstructionDecoder(
            config.feature_dim, self.image_encoder.num_tokens, config.patch_size
        )
        self._text_cache: dict[str, torch.Tensor] = {}

    # ---- text side -------------------------------------------------------

    def encode_prompts(self, prompts: Sequence[str]) -> torch.Tensor:
        """Prompt strings -> (len(prompts), D); cached per string."""
        missing = [p for p in prompts if p not in self._text_cache]
        if missing:
            sequences = [tokenize(p, self.vocab) for p in missing]
            with torch.no_grad():
                feats = self.text_encoder.encode_sequences(sequences)
            for prompt, feat in zip(missing, feats):
                self._text_cache[prompt] = feat.detach().clone()
        return torch.stack([self._text_cache[p] for p in prompts])

    def effective_prompts(self, bundle: PromptBundle) -> tuple[str, ...]:
        """The prompts a bundle contributes under the current flags."""
        if not self.config.mop:
            return bundle.prompts[:1]
        if len(bundle.prompts) < self.config.num_prompts:
            raise ValueError(
                f"class {bundle.class_name!r} has {len(bundle.prompts)} prompts; "
                f"config requests {self.config.num_prompts}"
            )
        return bundle.prompts[: self.config.num_prompts]

    def bundle_features(self, bundles: Sequence[PromptBundle]) -> torch.Tensor:
        """(C, P_eff, D) text features for a list of class bundles."""
        feats = [self.encode_prompts(self.effective_prompts(b)) for b in bundles]
        return torch.stack(feats)

    # ---- image side ------------------------------------------------------

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> fused visual tokens (B, N, D).

        The taps feed the fusion pre-norm; the encoder's final norm is applied
        to the fused output so downstream consumers see a stable scale.
        """
        taps = self.image_encoder(images)
        fused = self.fusion(taps, self.image_encoder.grid, enabled=self.config.msfa)
        return self.image_encoder.final_norm(fused)

    def decode_class(
        self, visual: torch.Tensor, text_features: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Score one class for each sample.

        visual: (B, N, D); text_features: (B, P, D) for that class.
        Returns fused scores (B, H, W), per-prompt maps (B, P, H, W), and
        gating weights (B, P, H, W).
        """
        b, n, d = visual.shape
        p = text_features.shape[1]
        cfg = self.config
        flat_visual = visual.repeat_interleave(p, dim=0)
        flat_text = text_features.reshape(b * p, d)
        maps = self.decoder(
            flat_visual,
            flat_text,
            grid=self.image_encoder.grid,
            out_size=cfg.image_size,
            attention_prompting=cfg.attention_prompting,
            conv_prompting=cfg.conv_prompting,
        ).reshape(b, p, cfg.image_size, cfg.image_size)
        if p == 1:
            weights = torch.ones_like(maps)
            return maps[:, 0], maps, weights
        grid_feat = visual.transpose(1, 2).reshape(b, d, self.image_encoder.grid,
                                                   self.image_encoder.grid)
        weights = compute_gating_weights(
            self.gating, grid_feat, text_features, cfg.image_size,
            granularity=cfg.gating_granularity,
        )
        return fuse_score_maps(maps, weights), maps, weights

    def score_classes(self, images: torch.Tensor, class_features: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) x (C, P, D) -> fused scores (B, C, H, W)."""
        visual = self.encode_image(images)
        b = images.shape[0]
        fused = []
        for c in range(class_features.shape[0]):
            feats = class_features[c].unsqueeze(0).expand(b, -1, -1)
            fused.append(self.decode_class(visual, feats)[0])
        return torch.stack(fused, dim=1)


@dataclass
class PredictRequest:
    """One image (or batch) plus the class bundles to segment."""

    images: torch.Tensor  # (B, 3, H, W)
    bundles: list[PromptBundle]

    def __post_init__(self):
        if len(self.bundles) < 1:
            raise ValueError("at least one prompt bundle required")
        ids = [b.class_id for b in self.bundles]
        if len(set(ids)) != len(ids):
            raise ValueError("prompt bundles must reference distinct classes")


@dataclass
class PredictResult:
    mask: torch.Tensor    # (B, H, W) class indices, 0 = background
    scores: torch.Tensor  # (B, C, H, W) fused per-class probabilities


@torch.no_grad()
def predict(model: PromptSegModel, request: PredictRequest) -> PredictResult:
    """Inference path; the reconstruction branch is never touched here."""
    model.eval()
    if request.images.shape[-1] != model.config.image_size:
        raise ValueError(
            f"geometry mismatch: model expects {model.config.image_size}, "
            f"got {request.images.shape[-1]}"
        )
    feats = model.bundle_features(request.bundles)
    scores = model.score_classes(request.images, feats)
    # assemble in class-id order so ties resolve to the smallest class id
    # regardless of how the bundles were passed
    order = sorted(range(len(request.bundles)), key=lambda i: request.bundles[i].class_id)
    ordered = scores[:, order]
    masks = torch.stack(
        [assemble_mask(ordered[i], model.config.threshold) for i in range(ordered.shape[0])]
    )
    id_map = torch.zeros(len(request.bundles) + 1, dtype=torch.long)
    for slot, src in enumerate(order, start=1):
        id_map[slot] = request.bundles[src].class_id
    return PredictResult(mask=id_map[masks], scores=scores)


def build_model(config: ModelConfig, vocab: dict[str, int],
                seed: Optional[int] = None) -> PromptSegModel:
    """Construct a model with deterministic, seeded initialization."""
    set_determinism(config.seed if seed is None else seed)
    return PromptSegModel(config, vocab)


def restore_model(path) -> tuple[PromptSegModel, dict]:
    """Rebuild a model from a checkpoint archive; returns (model, meta)."""
    arrays, meta = load_checkpoint(path)
    if "config" not in meta or "vocab" not in meta:
        raise CheckpointError(f"{path}: missing config/vocab metadata")
    config = config_from_dict(meta["config"])
    model = build_model(config, meta["vocab"])
    state = arrays_to_state_dict(arrays)
    model.load_state_dict(state, strict=True)
    model.eval()
    return model, meta


def samples_to_tensor(samples) -> torch.Tensor:
    """ImageSample list -> (B, 3, H, W) float tensor."""
    stack = np.stack([s.image for s in samples])
    return torch.from_numpy(stack).permute(0, 3, 1, 2).contiguous()
