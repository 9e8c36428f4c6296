"""EfficientNet-B4 trunk, tapped after the fifth block.

``features[0]`` is the stem convolution and ``features[1..5]`` are the
first five MBConv stages, so the tap keeps ``features[:6]``. On a 64x64
input the tapped activation is 160 x 4 x 4, which flattens to 2560.
"""

import hashlib

import numpy as np
import torch
from torchvision.models import efficientnet_b4

TAP_STAGES = 6
PATCH_SIZE_DEFAULT = 64
EXPECTED_DIM = 2560


def load_trunk(weights_path=None, seed: int = 0) -> torch.nn.Module:
    """Build the truncated network, frozen and in eval mode.

    Without a weights file the parameters are randomly initialized from
    ``seed``; shapes and determinism do not depend on training, so that
    is enough for format work and tests. Real extractions should pass a
    locally stored state dict.
    """
    torch.manual_seed(seed)
    net = efficientnet_b4(weights=None)
    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
    trunk = net.features[:TAP_STAGES]
    trunk.eval()
    for p in trunk.parameters():
        p.requires_grad_(False)
    return trunk


def embed(trunk: torch.nn.Module, batch: torch.Tensor) -> np.ndarray:
    """Run a (n, 3, s, s) batch and return flattened (n, d) float32 rows."""
    with torch.no_grad():
        out = trunk(batch)
    return out.reshape(out.shape[0], -1).numpy().astype(np.float32, copy=False)


def probe_dim(trunk: torch.nn.Module, patch_size: int) -> int:
    """Flattened vector length the trunk produces for this patch size."""
    return int(embed(trunk, torch.zeros(1, 3, patch_size, patch_size)).shape[1])


def weights_fingerprint(weights_path) -> str:
    sha = hashlib.sha256()
    with open(weights_path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            sha.update(chunk)
    return sha.hexdigest()
