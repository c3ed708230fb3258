"""Deterministic synthetic dataset of colored parametric shapes with text prompts.

Each image holds 1-3 non-overlapping shape instances drawn from a per-class
family, with mild rotation/brightness/size variation. Shape families come in
visually confusable pairs (ellipse/capsule, rectangle/cross) so the textual
prompt carries real signal. Images are stored as binary PPM, masks as binary
PGM class-index rasters, alongside a class manifest and a train/val split.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .config import ModelConfig
from .netpbm import read_pgm, read_ppm, write_pgm, write_ppm
from .prompts import PROMPT_TEMPLATE

PathLike = Union[str, Path]

# per-instance variation, recorded in gen.json
ROTATION_DEG = 10.0
BRIGHTNESS_JITTER = 0.2
SIZE_SCALE_RANGE = (0.88, 1.0)

TRAIN_FRACTION = 0.8


class DatasetError(ValueError):
    """Raised for malformed dataset directories or invalid samples."""


@dataclass
class ClassSpec:
    class_id: int            # 1..C; 0 is background
    name: str
    family: str              # ellipse | rectangle | triangle | annulus | cross | capsule
    color_low: tuple[float, float, float]
    color_high: tuple[float, float, float]
    prompts: tuple[str, str, str]  # name, template-expanded, long description

    @property
    def description(self) -> str:
        return self.prompts[2]


@dataclass
class ImageSample:
    image: np.ndarray   # H x W x 3 float32 in [0, 1]
    mask: np.ndarray    # H x W uint8 in {0..C}
    image_id: str

    def validate(self, num_classes: int) -> None:
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise DatasetError(f"{self.image_id}: image must be H x W x 3")
        if self.mask.shape != self.image.shape[:2]:
            raise DatasetError(
                f"{self.image_id}: mask shape {self.mask.shape} does not match "
                f"image {self.image.shape[:2]}"
            )
        top = int(self.mask.max()) if self.mask.size else 0
        if top > num_classes:
            raise DatasetError(
                f"{self.image_id}: mask value {top} exceeds num_classes {num_classes}"
            )


_FAMILY_DESCRIPTIONS = {
    "ellipse": (
        "a smooth solid oval patch with a continuous curved outline, reddish "
        "coloring, no corners or straight edges, wider along one axis than the "
        "other, and a filled interior of uniform tone"
    ),
    "capsule": (
        "an elongated stadium shaped blob in warm orange tones whose long "
        "straight sides run parallel and whose two ends are perfectly rounded "
        "semicircular caps, resembling a medicine pill seen from above"
    ),
    "rectangle": (
        "a solid four sided block of cool blue color with two pairs of parallel "
        "straight edges meeting at sharp right angle corners and a flat evenly "
        "filled interior region"
    ),
    "cross": (
        "a plus shaped figure in bright cyan built from two equal straight bars "
        "that intersect at their midpoints at a right angle, leaving four concave "
        "notches between the four protruding arms"
    ),
    "triangle": (
        "a three cornered green wedge bounded by exactly three straight edges "
        "that meet at sharp pointed vertices, with a flat uniformly colored "
        "interior and no curved boundary anywhere"
    ),
    "annulus": (
        "a purple ring formed by two concentric circular outlines, colored only "
        "in the band between them so that the round central hole shows the "
        "background through the middle"
    ),
}

# confusable pairs adjacent: ellipse/capsule share warm hues, rectangle/cross cool ones
_FAMILY_ORDER = ("ellipse", "capsule", "rectangle", "cross", "triangle", "annulus")

_FAMILY_COLORS = {
    "ellipse": ((0.72, 0.12, 0.14), (0.95, 0.32, 0.34)),
    "capsule": ((0.82, 0.42, 0.08), (1.00, 0.62, 0.26)),
    "rectangle": ((0.10, 0.22, 0.70), (0.30, 0.42, 0.95)),
    "cross": ((0.08, 0.58, 0.68), (0.28, 0.80, 0.92)),
    "triangle": ((0.12, 0.62, 0.16), (0.32, 0.85, 0.36)),
    "annulus": ((0.55, 0.16, 0.60), (0.78, 0.36, 0.85)),
}


def default_class_specs(num_classes: int) -> list[ClassSpec]:
    if not 1 <= num_classes <= len(_FAMILY_ORDER):
        raise DatasetError(
            f"generator supports 1..{len(_FAMILY_ORDER)} classes, got {num_classes}"
        )
    specs = []
    for class_id, family in enumerate(_FAMILY_ORDER[:num_classes], start=1):
        low, high = _FAMILY_COLORS[family]
        specs.append(
            ClassSpec(
                class_id=class_id,
                name=family,
                family=family,
                color_low=low,
                color_high=high,
                prompts=(
                    family,
                    PROMPT_TEMPLATE.format(name=family),
                    _FAMILY_DESCRIPTIONS[family],
                ),
            )
        )
    return specs


# ---------------------------------------------------------------------------
# shape rasterization


def _local_frame(height: int, width: int, cx: float, cy: float, angle: float):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = xx + 0.5 - cx
    dy = yy + 0.5 - cy
    ca, sa = math.cos(angle), math.sin(angle)
    u = ca * dx + sa * dy
    v = -sa * dx + ca * dy
    return u, v


def rasterize_shape(
    family: str,
    height: int,
    width: int,
    center: tuple[float, float],
    params: dict,
    angle: float = 0.0,
) -> np.ndarray:
    """Boolean inside-mask over pixel centers for one shape instance."""
    u, v = _local_frame(height, width, center[0], center[1], angle)
    if family == "ellipse":
        a, b = params["a"], params["b"]
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    if family == "rectangle":
        return (np.abs(u) <= params["half_w"]) & (np.abs(v) <= params["half_h"])
    if family == "triangle":
        # equilateral, circumradius R, one vertex pointing along +v
        r = params["radius"]
        verts = [
            (r * math.cos(a0), r * math.sin(a0))
            for a0 in (math.pi / 2, math.pi / 2 + 2 * math.pi / 3, math.pi / 2 + 4 * math.pi / 3)
        ]
        inside = np.ones_like(u, dtype=bool)
        for i in range(3):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % 3]
            # interior lies on the left of each CCW edge
            inside &= (x1 - x0) * (v - y0) - (y1 - y0) * (u - x0) >= 0
        return inside
    if family == "annulus":
        rr = u**2 + v**2
        return (rr <= params["outer"] ** 2) & (rr >= params["inner"] ** 2)
    if family == "cross":
        hl, ht = params["half_len"], params["half_thick"]
        return ((np.abs(u) <= hl) & (np.abs(v) <= ht)) | (
            (np.abs(v) <= hl) & (np.abs(u) <= ht)
        )
    if family == "capsule":
        hs, r = params["half_span"], params["radius"]
        t = np.clip(u, -hs, hs)
        return (u - t) ** 2 + v**2 <= r**2
    raise DatasetError(f"unknown shape family {family!r}")


def _sample_params(family: str, base: float, rng: np.random.Generator) -> dict:
    """Size parameters for one instance; `base` is the size budget in pixels."""
    if family == "ellipse":
        a = base * rng.uniform(0.85, 1.0)
        return {"a": a, "b": a * rng.uniform(0.7, 0.92)}
    if family == "rectangle":
        return {"half_w": base * rng.uniform(0.8, 1.0), "half_h": base * rng.uniform(0.7, 0.9)}
    if family == "triangle":
        return {"radius": base * rng.uniform(1.0, 1.2)}
    if family == "annulus":
        outer = base * rng.uniform(0.85, 1.0)
        return {"outer": outer, "inner": outer * rng.uniform(0.45, 0.6)}
    if family == "cross":
        half_len = base * rng.uniform(0.95, 1.1)
        return {"half_len": half_len, "half_thick": half_len * rng.uniform(0.55, 0.66)}
    if family == "capsule":
        return {
            "half_span": base * rng.uniform(0.42, 0.58),
            "radius": base * rng.uniform(0.52, 0.64),
        }
    raise DatasetError(f"unknown shape family {family!r}")


def _dilate(mask: np.ndarray) -> np.ndarray:
    """8-neighborhood dilation by one pixel (keeps instances visually separated)."""
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[1:, 1:] |= mask[:-1, :-1]
    out[:-1, :-1] |= mask[1:, 1:]
    out[1:, :-1] |= mask[:-1, 1:]
    out[:-1, 1:] |= mask[1:, :-1]
    return out


def render_sample(
    image_id: str,
    size: int,
    classes: list[ClassSpec],
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw one image/mask pair as uint8 rasters."""
    h = w = size
    background = rng.uniform(0.1, 0.16)
    image = np.full((h, w, 3), background, dtype=np.float64)
    mask = np.zeros((h, w), dtype=np.uint8)

    n_instances = int(rng.choice([1, 2, 3], p=[0.66, 0.26, 0.08]))
    chosen = rng.choice(len(classes), size=min(n_instances, len(classes)), replace=False)
    count_scale = {1: 1.0, 2: 0.85, 3: 0.7}[n_instances]
    base_budget = 0.375 * size * count_scale

    occupied = np.zeros((h, w), dtype=bool)
    for idx in chosen:
        spec = classes[int(idx)]
        placed = False
        for _ in range(60):
            scale = rng.uniform(*SIZE_SCALE_RANGE)
            params = _sample_params(spec.family, base_budget * scale, rng)
            angle = math.radians(rng.uniform(-ROTATION_DEG, ROTATION_DEG))
            margin = base_budget * scale + 2.0
            cx = rng.uniform(margin, w - margin)
            cy = rng.uniform(margin, h - margin)
            shape = rasterize_shape(spec.family, h, w, (cx, cy), params, angle)
            if shape.sum() < 16:
                continue
            if (shape & _dilate(occupied)).any():
                continue
            color = np.array(
                [rng.uniform(lo, hi) for lo, hi in zip(spec.color_low, spec.color_high)]
            )
            color = np.clip(color * rng.uniform(1 - BRIGHTNESS_JITTER, 1 + BRIGHTNESS_JITTER), 0, 1)
            image[shape] = color
            mask[shape] = spec.class_id
            occupied |= shape
            placed = True
            break
        if not placed:
            continue

    image_u8 = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return image_u8, mask


# ---------------------------------------------------------------------------
# generation and loading


def generate_dataset(
    config: ModelConfig,
    num_images: int,
    seed: int,
    out_dir: PathLike,
    classes: Optional[list[ClassSpec]] = None,
) -> dict:
    """Write a dataset directory and return its manifest.

    Layout: images/<id>.ppm, masks/<id>.pgm, classes.json, split.json, gen.json.
    Identical (config, num_images, seed) inputs produce byte-identical output.
    """
    if num_images < 1:
        raise DatasetError(f"num_images must be >= 1, got {num_images}")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    classes = classes if classes is not None else default_class_specs(config.num_classes)
    rng = np.random.default_rng(seed)

    ids = [f"img_{i:05d}" for i in range(num_images)]
    for image_id in ids:
        image_u8, mask = render_sample(image_id, config.image_size, classes, rng)
        write_ppm(out / "images" / f"{image_id}.ppm", image_u8)
        write_pgm(out / "masks" / f"{image_id}.pgm", mask)

    order = list(rng.permutation(num_images))
    n_train = max(1, int(round(TRAIN_FRACTION * num_images)))
    split = {
        "train": sorted(ids[i] for i in order[:n_train]),
        "val": sorted(ids[i] for i in order[n_train:]),
    }

    manifest = {
        "num_classes": len(classes),
        "classes": [
            {
                "id": spec.class_id,
                "name": spec.name,
                "family": spec.family,
                "color_low": list(spec.color_low),
                "color_high": list(spec.color_high),
                "prompts": list(spec.prompts),
            }
            for spec in classes
        ],
    }
    gen_meta = {
        "seed": seed,
        "num_images": num_images,
        "image_size": config.image_size,
        "variation": {
            "rotation_deg": ROTATION_DEG,
            "brightness_jitter": BRIGHTNESS_JITTER,
            "size_scale": list(SIZE_SCALE_RANGE),
        },
    }
    _write_json(out / "classes.json", manifest)
    _write_json(out / "split.json", split)
    _write_json(out / "gen.json", gen_meta)
    return manifest


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_class_specs(data_dir: PathLike) -> list[ClassSpec]:
    path = Path(data_dir) / "classes.json"
    if not path.exists():
        raise DatasetError(f"missing class manifest: {path}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    specs = []
    for entry in manifest["classes"]:
        prompts = entry["prompts"]
        if len(prompts) != 3:
            raise DatasetError(f"class {entry['name']!r}: expected 3 prompts, got {len(prompts)}")
        specs.append(
            ClassSpec(
                class_id=int(entry["id"]),
                name=entry["name"],
                family=entry.get("family", "unknown"),
                color_low=tuple(entry.get("color_low", (0, 0, 0))),
                color_high=tuple(entry.get("color_high", (1, 1, 1))),
                prompts=tuple(prompts),
            )
        )
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise DatasetError("class names must be unique")
    return specs


def load_split(data_dir: PathLike) -> dict:
    path = Path(data_dir) / "split.json"
    if not path.exists():
        raise DatasetError(f"missing split file: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_dataset(data_dir: PathLike) -> tuple[list[ImageSample], list[ClassSpec]]:
    """Read every sample in a dataset directory, validating each against the
    class manifest. Safe to call concurrently; no state is shared."""
    root = Path(data_dir)
    classes = load_class_specs(root)
    num_classes = len(classes)
    image_dir = root / "images"
    if not image_dir.is_dir():
        raise DatasetError(f"missing images directory: {image_dir}")
    samples = []
    for image_path in sorted(image_dir.glob("*.ppm")):
        image_id = image_path.stem
        mask_path = root / "masks" / f"{image_id}.pgm"
        if not mask_path.exists():
            raise DatasetError(f"missing mask for {image_id}: {mask_path}")
        image_u8 = read_ppm(image_path)
        mask = read_pgm(mask_path)
        sample = ImageSample(
            image=image_u8.astype(np.float32) / 255.0,
            mask=mask,
            image_id=image_id,
        )
        try:
            sample.validate(num_classes)
        except DatasetError as exc:
            raise DatasetError(f"{mask_path}: {exc}") from exc
        samples.append(sample)
    if not samples:
        raise DatasetError(f"no images found under {image_dir}")
    return samples, classes


def image_to_uint8(image: np.ndarray) -> np.ndarray:
    """Invert the float [0,1] representation back to 8-bit for serialization."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
