"""Image loading, cropping, and the pinned preprocessing pipeline.

The source material leaves normalization constants and the resize mode
unstated, so they are fixed here (ImageNet statistics, bilinear, direct
square resize with no aspect preservation) and written into the
extraction provenance file. Override via a TOML file when a different
pipeline is needed; the point is that every output records exactly what
produced it.
"""

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

_RESAMPLING = {
    "nearest": Image.Resampling.NEAREST,
    "bilinear": Image.Resampling.BILINEAR,
    "bicubic": Image.Resampling.BICUBIC,
    "lanczos": Image.Resampling.LANCZOS,
}


@dataclass(frozen=True)
class Preprocess:
    interpolation: str = "bilinear"
    mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: tuple[float, float, float] = (0.229, 0.224, 0.225)

    def __post_init__(self):
        if self.interpolation not in _RESAMPLING:
            raise ValueError(
                f"unknown interpolation {self.interpolation!r}; "
                f"choose one of {sorted(_RESAMPLING)}"
            )
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ValueError("mean and std need one value per RGB channel")
        if any(s <= 0 for s in self.std):
            raise ValueError("std values must be positive")

    @classmethod
    def from_toml(cls, path) -> "Preprocess":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        known = {"interpolation", "mean", "std"}
        stray = set(data) - known
        if stray:
            raise ValueError(f"{path}: unknown preprocessing keys: {sorted(stray)}")
        kwargs = {}
        if "interpolation" in data:
            kwargs["interpolation"] = str(data["interpolation"])
        for key in ("mean", "std"):
            if key in data:
                kwargs[key] = tuple(float(v) for v in data[key])
        return cls(**kwargs)

    def to_json_dict(self) -> dict:
        return {
            "interpolation": self.interpolation,
            "mean": list(self.mean),
            "std": list(self.std),
            "resize": "direct square, aspect not preserved",
            "pixel_scale": "1/255 before normalization",
        }


def load_image(path) -> Image.Image:
    with Image.open(path) as img:
        return img.convert("RGB")


def crop_patch(image: Image.Image, row, patch_size: int, pre: Preprocess) -> torch.Tensor:
    """Crop one annotated box and return a normalized (3, s, s) tensor."""
    if row.x + row.w > image.width or row.y + row.h > image.height:
        raise ValueError(
            f"box ({row.x}, {row.y}, {row.w}, {row.h}) exceeds "
            f"{image.width}x{image.height} image"
        )
    patch = image.crop((row.x, row.y, row.x + row.w, row.y + row.h))
    patch = patch.resize((patch_size, patch_size), _RESAMPLING[pre.interpolation])
    arr = np.asarray(patch, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(pre.mean, dtype=np.float32)) / np.asarray(pre.std, dtype=np.float32)
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())
