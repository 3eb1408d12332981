"""VGG-19 feature codec.

A frozen VGG-19 encoder (up to conv4_1) turns images into feature maps; a
mirrored decoder with nearest-neighbor upsampling turns (swapped) conv4_1
features back into images. ``compute_loss`` is the reconstruction objective
used to train the decoder: pixel squared error, per-layer perceptual squared
error and an anisotropic total-variation term.

Feature maps are (C, h, w) float32 torch tensors; layer activations are
dicts keyed by layer name.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .imaging import validate_image
from .weights import (
    DECODER_CONVS,
    ENCODER_CONVS,
    load_tensors,
    normalize_decoder_state,
    normalize_encoder_state,
)

LOSS_LAYERS = ("conv1_1", "conv2_1", "conv3_1", "conv4_1")
LAYER_CHANNELS = {"conv1_1": 64, "conv2_1": 128, "conv3_1": 256, "conv4_1": 512}
LAYER_STRIDES = {"conv1_1": 1, "conv2_1": 2, "conv3_1": 4, "conv4_1": 8}
MIN_INPUT_SIZE = 32

_POOL_AFTER = {"conv1_2", "conv2_2", "conv3_4"}
_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)

LayerActivations = dict[str, torch.Tensor]


def _to_batch(image: np.ndarray | torch.Tensor, expand_gray: bool = True) -> torch.Tensor:
    """(H, W, C) array or (C, H, W)/(B, C, H, W) tensor -> float32 BCHW."""
    if isinstance(image, np.ndarray):
        if image.ndim != 3 or image.shape[2] not in (1, 3):
            raise ValueError(f"expected an (H, W, C) image, got shape {image.shape}")
        t = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1)[None]
    elif isinstance(image, torch.Tensor):
        t = image[None] if image.ndim == 3 else image
        if t.ndim != 4:
            raise ValueError(f"expected a 3-D or 4-D tensor, got shape {tuple(image.shape)}")
    else:
        raise ValueError(f"unsupported image type {type(image)!r}")
    t = t.float()
    if t.shape[1] == 1 and expand_gray:
        t = t.expand(-1, 3, -1, -1)
    if t.shape[1] not in (1, 3):
        raise ValueError(f"expected 1 or 3 channels, got {t.shape[1]}")
    if not torch.isfinite(t).all():
        raise ValueError("image contains non-finite values")
    return t.contiguous()


class VggEncoder(nn.Module):
    """Frozen VGG-19 front end; taps ReLU outputs of conv1_1..conv4_1."""

    def __init__(self, state: dict[str, torch.Tensor]):
        super().__init__()
        state = normalize_encoder_state(state)
        convs = {}
        for name, cin, cout in ENCODER_CONVS:
            conv = nn.Conv2d(cin, cout, 3, padding=1)
            conv.weight.data.copy_(state[f"{name}.weight"])
            conv.bias.data.copy_(state[f"{name}.bias"])
            convs[name] = conv
        self.convs = nn.ModuleDict(convs)
        self.pool = nn.MaxPool2d(2, stride=2, ceil_mode=True)
        mean = torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1)
        self.register_buffer("mean", mean)
        self.register_buffer("std", std)
        self.requires_grad_(False)
        self.eval()
        self.to(memory_format=torch.channels_last)

    @classmethod
    def from_file(cls, path) -> "VggEncoder":
        return cls(load_tensors(path, "encoder"))

    def forward(self, x: torch.Tensor, layers=LOSS_LAYERS) -> LayerActivations:
        wanted = set(layers)
        unknown = wanted - set(LAYER_CHANNELS)
        if unknown:
            raise ValueError(f"unknown encoder layers: {sorted(unknown)}")
        x = ((x - self.mean) / self.std).to(memory_format=torch.channels_last)
        acts: LayerActivations = {}
        for name, _, _ in ENCODER_CONVS:
            x = F.relu(self.convs[name](x), inplace=True)
            if name in wanted:
                acts[name] = x
                if len(acts) == len(wanted):
                    break
            if name in _POOL_AFTER:
                x = self.pool(x)
        return acts

    def encode(self, image: np.ndarray | torch.Tensor, layers=LOSS_LAYERS) -> LayerActivations:
        """Deterministic forward pass on one image; returns (C, h, w) maps."""
        batch = _to_batch(image)
        if min(batch.shape[2], batch.shape[3]) < MIN_INPUT_SIZE:
            raise ValueError(
                f"image spatial size {tuple(batch.shape[2:])} is below the "
                f"{MIN_INPUT_SIZE} px encoder minimum"
            )
        with torch.inference_mode():
            acts = self.forward(batch, layers)
        return {k: v[0].clone(memory_format=torch.contiguous_format) for k, v in acts.items()}

    def encode_batch(self, images: torch.Tensor, layers=LOSS_LAYERS) -> LayerActivations:
        """Forward a BCHW stack of equally sized images; returns BCHW maps."""
        if min(images.shape[2], images.shape[3]) < MIN_INPUT_SIZE:
            raise ValueError("images below the encoder size minimum")
        with torch.inference_mode():
            acts = self.forward(images, layers)
        return {k: v.clone(memory_format=torch.contiguous_format) for k, v in acts.items()}


class VggDecoder(nn.Module):
    """Mirror of the encoder: conv + ReLU stacks with nearest upsampling.

    Convolutions use the encoder's zero padding (keeps the fused conv path
    on CPU). The stages matching conv2_1 and conv1_1 take skip activations
    of the source image concatenated on the channel axis; zero tensors are
    used when no skips are supplied.
    """

    def __init__(self, state: dict[str, torch.Tensor] | None = None):
        super().__init__()
        convs = {}
        for name, cin, cout in DECODER_CONVS:
            convs[name] = nn.Conv2d(cin, cout, 3, padding=1)
        self.convs = nn.ModuleDict(convs)
        if state is not None:
            state = normalize_decoder_state(state)
            for name, _, _ in DECODER_CONVS:
                self.convs[name].weight.data.copy_(state[f"{name}.weight"])
                self.convs[name].bias.data.copy_(state[f"{name}.bias"])
        self.to(memory_format=torch.channels_last)

    @classmethod
    def from_file(cls, path) -> "VggDecoder":
        return cls(load_tensors(path, "decoder"))

    def state_tensors(self) -> dict[str, torch.Tensor]:
        out = {}
        for name, _, _ in DECODER_CONVS:
            out[f"{name}.weight"] = self.convs[name].weight.detach().clone().contiguous()
            out[f"{name}.bias"] = self.convs[name].bias.detach().clone()
        return out

    def _up(self, x: torch.Tensor) -> torch.Tensor:
        return F.interpolate(x, scale_factor=2, mode="nearest")

    def _cat_skip(self, x: torch.Tensor, skip: torch.Tensor | None, channels: int) -> torch.Tensor:
        if skip is None:
            skip = x.new_zeros((x.shape[0], channels, x.shape[2], x.shape[3]))
        if skip.ndim == 3:
            skip = skip[None].expand(x.shape[0], -1, -1, -1)
        if skip.shape[2:] != x.shape[2:]:
            raise ValueError(
                f"skip activations {tuple(skip.shape[2:])} do not match decoder "
                f"stage size {tuple(x.shape[2:])}"
            )
        return torch.cat([x, skip.to(x.dtype)], dim=1)

    def forward(self, feature: torch.Tensor, skips: LayerActivations | None = None) -> torch.Tensor:
        if feature.ndim != 4 or feature.shape[1] != LAYER_CHANNELS["conv4_1"]:
            raise ValueError(
                f"decoder expects (B, 512, h, w) conv4_1 features, got {tuple(feature.shape)}"
            )
        skips = skips or {}
        feature = feature.to(memory_format=torch.channels_last)
        x = F.relu(self.convs["dec4_1"](feature))
        x = self._up(x)
        for name in ("dec3_4", "dec3_3", "dec3_2", "dec3_1"):
            x = F.relu(self.convs[name](x))
        x = self._up(x)
        x = self._cat_skip(x, skips.get("conv2_1"), 128)
        x = F.relu(self.convs["dec2_2"](x))
        x = F.relu(self.convs["dec2_1"](x))
        x = self._up(x)
        x = self._cat_skip(x, skips.get("conv1_1"), 64)
        x = F.relu(self.convs["dec1_2"](x))
        return self.convs["dec1_1"](x)

    def decode(self, feature: torch.Tensor, skips: LayerActivations | None = None) -> np.ndarray:
        """Decode one (512, h, w) feature map to an (8h, 8w, 3) image."""
        if feature.ndim != 3:
            raise ValueError(f"expected a (C, h, w) feature map, got {tuple(feature.shape)}")
        with torch.inference_mode():
            out = self.forward(feature[None], skips)[0]
        img = np.ascontiguousarray(out.permute(1, 2, 0).clamp(0.0, 1.0).numpy(), dtype=np.float32)
        return validate_image(img, "decoded image")

    def decode_batch(self, features: torch.Tensor, skips: LayerActivations | None = None) -> list[np.ndarray]:
        with torch.inference_mode():
            out = self.forward(features, skips)
        out = out.permute(0, 2, 3, 1).clamp(0.0, 1.0).numpy().astype(np.float32)
        return [validate_image(np.ascontiguousarray(out[i]), "decoded image") for i in range(out.shape[0])]


@dataclass(frozen=True)
class LossWeights:
    """Per-layer perceptual weights and the total-variation weight."""

    perceptual: dict[str, float] = field(
        default_factory=lambda: {layer: 1.0 for layer in LOSS_LAYERS}
    )
    tv: float = 1e-6

    def __post_init__(self):
        for layer, w in self.perceptual.items():
            if layer not in LAYER_CHANNELS:
                raise ValueError(f"unknown loss layer '{layer}'")
            if not np.isfinite(w) or w < 0:
                raise ValueError(f"perceptual weight for {layer} must be finite and >= 0")
        if not np.isfinite(self.tv) or self.tv < 0:
            raise ValueError("tv weight must be finite and >= 0")


@dataclass
class LossBreakdown:
    pixel: torch.Tensor
    perceptual: dict[str, torch.Tensor]
    tv: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        out = {
            "pixel": float(self.pixel.detach()),
            "tv": float(self.tv.detach()),
            "total": float(self.total.detach()),
        }
        for layer, value in self.perceptual.items():
            out[f"perc_{layer}"] = float(value.detach())
        return out


def total_variation(x: torch.Tensor) -> torch.Tensor:
    """Sum of absolute horizontal and vertical neighbor differences (BCHW)."""
    dh = (x[:, :, :, 1:] - x[:, :, :, :-1]).abs().sum()
    dv = (x[:, :, 1:, :] - x[:, :, :-1, :]).abs().sum()
    return dh + dv


def compute_loss(
    encoder: VggEncoder,
    original: np.ndarray | torch.Tensor,
    reconstruction: np.ndarray | torch.Tensor,
    weights: LossWeights | None = None,
    original_acts: LayerActivations | None = None,
) -> LossBreakdown:
    """Reconstruction loss breakdown between an image and its reconstruction.

    The reconstruction may carry gradients; the original is treated as a
    constant. Pixel and perceptual terms are squared L2 sums, tv is the
    weighted absolute-difference total variation, total is their sum.
    """
    weights = weights or LossWeights()
    x = _to_batch(original, expand_gray=False)
    y = _to_batch(reconstruction, expand_gray=False)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: original {tuple(x.shape)} vs reconstruction {tuple(y.shape)}")
    # Pixel and tv terms act on the values as given; the encoder sees 3-channel input.
    pixel = ((x - y) ** 2).sum()
    tv = weights.tv * total_variation(y)
    layers = tuple(weights.perceptual)
    perceptual = {}
    if layers:
        x3 = x.expand(-1, 3, -1, -1) if x.shape[1] == 1 else x
        y3 = y.expand(-1, 3, -1, -1) if y.shape[1] == 1 else y
        if original_acts is None:
            with torch.no_grad():
                original_acts = encoder.forward(x3, layers)
        recon_acts = encoder.forward(y3, layers)
        for layer in layers:
            diff = original_acts[layer].detach() - recon_acts[layer]
            perceptual[layer] = weights.perceptual[layer] * (diff**2).sum()
    total = pixel + tv
    for value in perceptual.values():
        total = total + value
    return LossBreakdown(pixel=pixel, perceptual=perceptual, tv=tv, total=total)
