"""Channel grouping: surface/texture masks over feature-map channels.

A channel mask is a boolean torch vector; True marks a surface channel and
the complement marks texture. The mask is derived by comparing the pooled
channel codes of the surface-source and texture-source activations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


def gap(feature: torch.Tensor) -> torch.Tensor:
    """Spatial global average pooling: one mean per channel."""
    if feature.ndim != 3 or feature.numel() == 0:
        raise ValueError(f"expected a non-empty (C, h, w) feature map, got {tuple(feature.shape)}")
    return feature.mean(dim=(1, 2))


def compute_mask(surface_code: torch.Tensor, texture_code: torch.Tensor) -> torch.Tensor:
    """Per-channel strict comparison; ties go to texture (False)."""
    if surface_code.shape != texture_code.shape or surface_code.ndim != 1:
        raise ValueError(
            f"code length mismatch: {tuple(surface_code.shape)} vs {tuple(texture_code.shape)}"
        )
    return surface_code > texture_code


def split(feature: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Zero out the complementary channels; surface + texture == feature exactly."""
    if feature.ndim != 3 or mask.ndim != 1 or mask.shape[0] != feature.shape[0]:
        raise ValueError(
            f"mask length {tuple(mask.shape)} does not match feature channels {feature.shape[0]}"
        )
    m = mask.to(torch.bool).view(-1, 1, 1)
    zero = torch.zeros((), dtype=feature.dtype)
    surface = torch.where(m, feature, zero)
    texture = torch.where(m, zero, feature)
    return surface, texture


@dataclass(frozen=True)
class CodeRateStats:
    surface: int
    texture: int
    balance: float


def code_rate_stats(mask: torch.Tensor) -> CodeRateStats:
    """Counts per group and distance of the surface count from half the channels."""
    if mask.ndim != 1:
        raise ValueError("mask must be a 1-D vector")
    surface = int(mask.to(torch.bool).sum())
    total = int(mask.shape[0])
    return CodeRateStats(
        surface=surface,
        texture=total - surface,
        balance=abs(surface - total / 2.0),
    )


def fixed_grouping(channels: int, group_size: int) -> list[torch.Tensor]:
    """Contiguous channel blocks as masks; the last block may be shorter."""
    if group_size < 1:
        raise ValueError(f"group_size must be >= 1, got {group_size}")
    if channels < 1:
        raise ValueError(f"channels must be >= 1, got {channels}")
    masks = []
    for start in range(0, channels, group_size):
        m = torch.zeros(channels, dtype=torch.bool)
        m[start : start + group_size] = True
        masks.append(m)
    return masks


def mask_from_images(encoder, surface_image: np.ndarray, texture_image: np.ndarray,
                     layer: str = "conv4_1") -> torch.Tensor:
    """Mask from the pooled codes of two already-decomposed source images.

    Sources are clamped to the encoder's [0, 1] image range; an exact
    reflectance may exceed 1 before clamping.
    """
    surface_image = np.clip(surface_image, 0.0, 1.0).astype(np.float32)
    texture_image = np.clip(texture_image, 0.0, 1.0).astype(np.float32)
    surface_code = gap(encoder.encode(surface_image, (layer,))[layer])
    texture_code = gap(encoder.encode(texture_image, (layer,))[layer])
    return compute_mask(surface_code, texture_code)
