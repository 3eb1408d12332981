"""Complementary fusion of the texture and surface decodes.

Dark regions of the texture result are repaired by adding in the surface
result, weighted by an activated complement of the texture luminance:
weight 1 where the texture is black, 0 where it is white. The activation is
a steep sigmoid so that only genuinely dark areas receive surface content.

Two activation modes exist. ``verbatim`` applies 1 / (1 + exp(-w * delta) +
epsilon) exactly as published; its output never drops below ~1/(2 + epsilon),
so even bright areas receive half-strength surface. ``shifted`` (the
default) applies 1 / (1 + exp(-(w - tau) * delta)), which stays near zero
until the weight passes tau and matches the described curve behavior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import to_luminance, validate_image

FUSION_MODES = ("verbatim", "shifted")


@dataclass(frozen=True)
class FusionConfig:
    delta: float = 15.0
    epsilon: float = 0.0
    tau: float = 0.6
    mode: str = "shifted"

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.mode not in FUSION_MODES:
            raise ValueError(f"mode must be one of {FUSION_MODES}, got '{self.mode}'")


def complementary_weights(texture_image: np.ndarray) -> np.ndarray:
    """(H, W) map of 1 - luminance: dark texture pixels get weight near 1."""
    validate_image(texture_image)
    return (1.0 - to_luminance(texture_image)[:, :, 0]).astype(np.float32)


def activate_weights(weights: np.ndarray, config: FusionConfig) -> np.ndarray:
    """Sigmoid-activate a weight map; output values lie in (0, 1)."""
    if weights.ndim != 2:
        raise ValueError(f"expected an (H, W) weight map, got shape {weights.shape}")
    w = weights.astype(np.float64)
    if config.mode == "verbatim":
        out = 1.0 / (1.0 + np.exp(-w * config.delta) + config.epsilon)
    else:
        out = 1.0 / (1.0 + np.exp(-(w - config.tau) * config.delta))
    return out.astype(np.float32)


def fuse(texture: np.ndarray, surface: np.ndarray, activated: np.ndarray) -> np.ndarray:
    """texture + activated * surface, clamped to [0, 1].

    The weight map broadcasts across color channels.
    """
    validate_image(texture, "texture image")
    validate_image(surface, "surface image")
    if texture.shape != surface.shape:
        raise ValueError(f"shape mismatch: texture {texture.shape} vs surface {surface.shape}")
    if activated.shape != texture.shape[:2]:
        raise ValueError(
            f"weight map shape {activated.shape} does not match image size {texture.shape[:2]}"
        )
    fused = texture + activated[:, :, None] * surface
    return np.clip(fused, 0.0, 1.0).astype(np.float32)
