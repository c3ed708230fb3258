"""Model/run configuration and the flat key-value config file parser."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Union


class ConfigError(ValueError):
    """Raised for unparseable config files or invalid parameter values."""


_BOOL_VALUES = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


@dataclass
class ModelConfig:
    image_size: int = 64          # H = W; must be divisible by patch_size
    patch_size: int = 16
    feature_dim: int = 64
    encoder_layers: int = 12      # taps at L/3, 2L/3, L
    decoder_blocks: int = 3
    conv_kernel: int = 1          # dynamic kernel size, odd
    num_prompts: int = 3
    num_classes: int = 4
    threshold: float = 0.35       # score -> mask cutoff
    mask_ratio_threshold: float = 0.25
    loss_weight: float = 0.5      # reconstruction term weight
    learning_rate: float = 1e-4   # drops x0.1 at 70% of epochs
    epochs: int = 50
    batch_size: int = 2
    seed: int = 0
    prompt_assets: str = ""       # optional JSON overriding the built-in prompt corpus
    # ablation switches
    msfa: bool = True             # multi-scale feature fusion in the image encoder
    cls_token_pooling: bool = True  # False: mean over word tokens instead of [CLS]
    attention_prompting: bool = True
    conv_prompting: bool = True
    mop: bool = True              # False: single class-name prompt, no gating
    hiar: bool = True             # reconstruction branch during training
    ham: bool = True              # False: uniform random masking instead of error mining
    gating_granularity: str = "pixel"  # pixel | image

    def validate(self) -> None:
        if self.image_size <= 0 or self.patch_size <= 0:
            raise ConfigError("image_size and patch_size must be positive")
        if self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image_size: H mod p != 0 ({self.image_size} % {self.patch_size})"
            )
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold: must lie in (0, 1), got {self.threshold}")
        if not 0.0 < self.mask_ratio_threshold < 1.0:
            raise ConfigError(
                f"mask_ratio_threshold: must lie in (0, 1), got {self.mask_ratio_threshold}"
            )
        if self.loss_weight < 0.0:
            raise ConfigError(f"loss_weight: must be >= 0, got {self.loss_weight}")
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise ConfigError(f"conv_kernel: must be odd and >= 1, got {self.conv_kernel}")
        if self.num_prompts < 1:
            raise ConfigError(f"num_prompts: must be >= 1, got {self.num_prompts}")
        if self.encoder_layers <= 0 or self.encoder_layers % 3 != 0:
            raise ConfigError(
                f"encoder_layers: L mod 3 != 0 ({self.encoder_layers}); layer taps sit at L/3, 2L/3, L"
            )
        if self.num_classes < 1:
            raise ConfigError(f"num_classes: must be >= 1, got {self.num_classes}")
        if self.feature_dim < 4 or self.feature_dim % 4 != 0:
            raise ConfigError(
                f"feature_dim: must be a positive multiple of 4 (attention heads), got {self.feature_dim}"
            )
        if self.decoder_blocks < 1:
            raise ConfigError(f"decoder_blocks: must be >= 1, got {self.decoder_blocks}")
        if self.epochs < 1:
            raise ConfigError(f"epochs: must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate: must be > 0, got {self.learning_rate}")
        if self.gating_granularity not in ("pixel", "image"):
            raise ConfigError(
                f"gating_granularity: expected 'pixel' or 'image', got {self.gating_granularity!r}"
            )

    @property
    def grid_size(self) -> int:
        """Token grid side length H/p."""
        return self.image_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid_size * self.grid_size

    @property
    def tap_layers(self) -> tuple[int, int, int]:
        third = self.encoder_layers // 3
        return (third, 2 * third, self.encoder_layers)

    def with_overrides(self, **overrides) -> "ModelConfig":
        cfg = replace(self, **overrides)
        cfg.validate()
        return cfg


def _coerce(key: str, raw: str, target_type: type) -> Union[bool, int, float, str]:
    raw = raw.strip()
    if target_type is bool:
        if raw.lower() not in _BOOL_VALUES:
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        return _BOOL_VALUES[raw.lower()]
    if target_type is int:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if target_type is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    return raw


def parse_config_text(text: str) -> ModelConfig:
    """Parse ``key = value`` (or ``key: value``) lines into a validated config.

    Blank lines and ``#`` comments are ignored. Unknown keys are an error so a
    typo cannot silently fall back to a default.
    """
    known = {f.name: f.type for f in fields(ModelConfig)}
    # dataclass field types arrive as strings under `from __future__ import annotations`
    type_map = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        for sep in ("=", ":"):
            if sep in stripped:
                key, raw = stripped.split(sep, 1)
                break
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, type_map[str(known[key])])
    cfg = ModelConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: Union[str, Path]) -> ModelConfig:
    """Load a config file; unset keys take their defaults."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_config_text(text)


def dump_config(cfg: ModelConfig) -> str:
    """Render a config as the same flat key-value format accepted by the parser."""
    lines = []
    for f in fields(ModelConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_to_dict(cfg: ModelConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(ModelConfig)}


def config_from_dict(data: dict) -> ModelConfig:
    known = {f.name for f in fields(ModelConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ModelConfig(**data)
    cfg.validate()
    return cfg
