"""Text-promptable segmentation of parametric shapes.

A desk-scale vision-language segmenter: a frozen transformer text encoder
and a trainable ViT image encoder feed a prompt-conditioned mask decoder
(attention-based prompting followed by a dynamic convolution generated from
the text feature). Score maps from multiple prompts per class are fused by
a visual-textual gating network, and training is reinforced by a masked
reconstruction branch that targets mispredicted image regions.
"""

__version__ = "0.1.0"

from .config import ModelConfig, load_config

__all__ = ["ModelConfig", "load_config", "__version__"]
