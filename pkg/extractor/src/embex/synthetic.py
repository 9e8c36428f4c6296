"""Seeded Gaussian-mixture embeddings: the no-images, no-network mode.

A JSON spec names the classes and how their vectors spread:

    {
      "seed": 0,
      "dim": 2560,
      "classes": [
        {"label": "stop", "count": 120},
        {"label": "limit", "count": 40, "scale": 1.0, "center_scale": 5.0,
         "exemplars": 30, "jitter": 0.1}
      ]
    }

Each class is a Gaussian cluster: a center drawn at ``center_scale``,
samples spread around it at ``scale``. With ``exemplars`` set, the class
instead re-jitters that many fixed prototype vectors, which models a
stream where frequency is redundancy rather than new content; that is
the regime the downstream filter exists for. Everything is deterministic
per seed, and rows are interleaved by one global shuffle so no class
arrives as a block.
"""

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClassSpec:
    label: str
    count: int
    scale: float = 1.0
    center_scale: float = 5.0
    exemplars: int = 0
    jitter: float = 0.1


@dataclass(frozen=True)
class MixtureSpec:
    dim: int
    classes: tuple[ClassSpec, ...]
    seed: int = 0


def load_spec(path) -> MixtureSpec:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a JSON object")
    if "dim" not in data:
        raise ValueError(f"{path}: missing \"dim\"")
    dim = int(data["dim"])
    if dim < 1:
        raise ValueError(f"{path}: dim must be positive, got {dim}")
    raw_classes = data.get("classes")
    if not raw_classes:
        raise ValueError(f"{path}: \"classes\" must be a non-empty list")
    classes = []
    for k, raw in enumerate(raw_classes):
        label = str(raw.get("label", ""))
        if not label:
            raise ValueError(f"{path}: classes[{k}] has no label")
        count = int(raw.get("count", 0))
        if count < 1:
            raise ValueError(f"{path}: class {label!r} count must be positive")
        spec = ClassSpec(
            label=label,
            count=count,
            scale=float(raw.get("scale", 1.0)),
            center_scale=float(raw.get("center_scale", 5.0)),
            exemplars=int(raw.get("exemplars", 0)),
            jitter=float(raw.get("jitter", 0.1)),
        )
        if spec.scale <= 0 or spec.jitter <= 0:
            raise ValueError(f"{path}: class {label!r} scale and jitter must be positive")
        if spec.exemplars < 0:
            raise ValueError(f"{path}: class {label!r} exemplars must not be negative")
        classes.append(spec)
    seen = [c.label for c in classes]
    if len(set(seen)) != len(seen):
        raise ValueError(f"{path}: duplicate class labels")
    return MixtureSpec(dim=dim, classes=tuple(classes), seed=int(data.get("seed", 0)))


def generate(spec: MixtureSpec) -> tuple[np.ndarray, list[str]]:
    """Materialize the mixture as (vectors, labels), interleaved."""
    rng = np.random.default_rng(spec.seed)
    blocks, labels = [], []
    for cls in spec.classes:
        center = rng.normal(scale=cls.center_scale, size=spec.dim)
        if cls.exemplars:
            protos = center + rng.normal(scale=cls.scale, size=(cls.exemplars, spec.dim))
            picks = rng.integers(cls.exemplars, size=cls.count)
            rows = protos[picks] + rng.normal(scale=cls.jitter, size=(cls.count, spec.dim))
        else:
            rows = center + rng.normal(scale=cls.scale, size=(cls.count, spec.dim))
        blocks.append(rows)
        labels.extend([cls.label] * cls.count)
    vectors = np.concatenate(blocks)
    order = rng.permutation(len(labels))
    return vectors[order].astype(np.float32), [labels[i] for i in order]
