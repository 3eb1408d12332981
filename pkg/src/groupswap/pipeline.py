"""End-to-end stylization: decompose, encode, group, swap, decode, fuse.

Stage timing uses two buckets matching the benchmark report: ``retinex``
covers content decomposition, ``cgps`` covers everything after it (feature
extraction, grouping, both swaps, decoding and optional fusion).
"""

from __future__ import annotations

import contextlib
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .codec import VggDecoder, VggEncoder
from .config import StylizeConfig
from .decompose import DecompositionPair, decompose_classical
from .decomnet import decompose_learned
from .errors import ConfigurationError, StageError
from .fusion import activate_weights, complementary_weights, fuse
from .grouping import compute_mask, gap
from .imaging import load_image, resize_to, save_image, validate_image
from .swap import PatchBank, SwapResult, extract_patches, swap_accelerated


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass
class StylizeResult:
    image: np.ndarray  # final output
    texture_image: np.ndarray  # decode of the texture-group swap
    surface_image: np.ndarray  # decode of the surface-group swap
    illumination: np.ndarray
    reflectance: np.ndarray  # may exceed [0, 1]; clamp for display
    mask: torch.Tensor  # True = surface channel
    surface_swap: SwapResult
    texture_swap: SwapResult
    surface_bank: PatchBank
    texture_bank: PatchBank
    timings: dict[str, float]


def prepare_input(img: np.ndarray, cfg: StylizeConfig) -> np.ndarray:
    """Bound the larger side and snap dimensions to multiples of 8.

    The snap keeps decoder output and skip activations aligned with the
    input size for any input.
    """
    h, w = img.shape[:2]
    scale = 1.0
    if not cfg.no_resize and max(h, w) > cfg.max_side:
        scale = cfg.max_side / max(h, w)
    th = max(32, int(h * scale / 8 + 0.5) * 8)
    tw = max(32, int(w * scale / 8 + 0.5) * 8)
    return resize_to(img, th, tw) if (th, tw) != (h, w) else img


def _to_tensor(img: np.ndarray) -> torch.Tensor:
    t = torch.from_numpy(np.ascontiguousarray(img)).permute(2, 0, 1).float()
    return t.expand(3, -1, -1) if t.shape[0] == 1 else t


def _decompose(img: np.ndarray, cfg: StylizeConfig) -> DecompositionPair:
    if cfg.decomposer == "learned":
        try:
            return decompose_learned(img, cfg.decom_weights or "")
        except ConfigurationError:
            if not cfg.fallback_classical:
                raise
            return decompose_classical(img, floor=cfg.floor)
    return decompose_classical(img, floor=cfg.floor)


def _group_swap(
    content_feature: torch.Tensor,
    style_features: list[tuple[float, torch.Tensor]],
    content_mask: torch.Tensor,
    style_mask: torch.Tensor,
    p: int,
    compact: bool,
) -> tuple[torch.Tensor, SwapResult, PatchBank]:
    """Swap one channel group; returns the full-width swapped feature.

    With a shared mask the group's zero channels carry no information, so
    scoring and reconstruction run on the compacted channel subset and the
    result is scattered back; this is exactly equivalent to swapping with
    the zero channels left in place. With distinct content/style masks the
    full channel width is kept because the groups no longer align.
    """
    if compact:
        idx = content_mask.nonzero().flatten()
        if idx.numel() > 0:
            content_group = content_feature[idx]
            banks = [extract_patches(feat[idx], p, scale=s) for s, feat in style_features]
        else:
            # degenerate group with no channels: swap a zero placeholder so
            # the result contracts (assignment, gap, zero output) still hold
            content_group = torch.zeros((1, *content_feature.shape[1:]))
            banks = [
                extract_patches(torch.zeros((1, feat.shape[1], feat.shape[2])), p, scale=s)
                for s, feat in style_features
            ]
    else:
        zero = torch.zeros((), dtype=content_feature.dtype)
        content_group = torch.where(content_mask.view(-1, 1, 1), content_feature, zero)
        banks = [
            extract_patches(torch.where(style_mask.view(-1, 1, 1), feat, zero), p, scale=s)
            for s, feat in style_features
        ]
    bank = PatchBank.concat(banks)
    result = swap_accelerated(content_group, bank)
    if compact:
        full = torch.zeros_like(content_feature)
        if idx.numel() > 0:
            full[idx] = result.swapped
    else:
        full = result.swapped
    return full, result, bank


def run_stylize(
    cfg: StylizeConfig,
    encoder: VggEncoder | None = None,
    decoder: VggDecoder | None = None,
    content_img: np.ndarray | None = None,
    style_img: np.ndarray | None = None,
) -> StylizeResult:
    """Execute the full pipeline; raises StageError naming the failed stage."""
    cfg.validated()
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed % (2**32))

    with _stage("load"):
        if encoder is None:
            encoder = VggEncoder.from_file(cfg.encoder_weights)
        if decoder is None:
            decoder = VggDecoder.from_file(cfg.decoder_weights)
        if content_img is None:
            content_img = load_image(cfg.content)
        if style_img is None:
            style_img = load_image(cfg.style)
        content_img = prepare_input(content_img, cfg)
        style_img = prepare_input(style_img, cfg)

    t0 = time.perf_counter()
    with _stage("decompose"):
        pair = _decompose(content_img, cfg)
    retinex_time = time.perf_counter() - t0

    t1 = time.perf_counter()
    with _stage("encode"):
        # The reflectance feeds mask estimation only; the encoder sees it
        # clamped to the image range (the exact values stay in the pair).
        # Content is encoded alone so the large shallow activations (skips)
        # are only kept for one image.
        content_acts = encoder.encode(content_img, ("conv1_1", "conv2_1", "conv4_1"))
        feat_content = content_acts["conv4_1"]
        sources = torch.stack(
            [_to_tensor(pair.illumination), _to_tensor(np.clip(pair.reflectance, 0.0, 1.0))]
        )
        source_acts = encoder.encode_batch(sources, ("conv4_1",))
        feat_illum = source_acts["conv4_1"][0]
        feat_refl = source_acts["conv4_1"][1]
        del source_acts
        style_features = []
        for s in cfg.scales:
            scaled = style_img if s == 1.0 else resize_to(
                style_img,
                max(1, int(style_img.shape[0] * s + 0.5)),
                max(1, int(style_img.shape[1] * s + 0.5)),
            )
            try:
                acts = encoder.encode(scaled, ("conv4_1",))
            except ValueError as exc:
                raise ValueError(f"style scale {s}: {exc}") from exc
            style_features.append((float(s), acts["conv4_1"]))

    with _stage("group"):
        mask = compute_mask(gap(feat_illum), gap(feat_refl))
        if cfg.independent_style_mask:
            style_pair = _decompose(style_img, cfg)
            style_mask = compute_mask(
                gap(encoder.encode(style_pair.illumination, ("conv4_1",))["conv4_1"]),
                gap(encoder.encode(np.clip(style_pair.reflectance, 0.0, 1.0), ("conv4_1",))["conv4_1"]),
            )
        else:
            style_mask = mask
        compact = not cfg.independent_style_mask

    with _stage("swap"):
        surface_full, surface_swap, surface_bank = _group_swap(
            feat_content, style_features, mask, style_mask, cfg.patch, compact
        )
        texture_full, texture_swap, texture_bank = _group_swap(
            feat_content, style_features, ~mask, ~style_mask, cfg.patch, compact
        )

    with _stage("decode"):
        # Sequential decodes keep the peak activation footprint at one image.
        skips = {"conv1_1": content_acts["conv1_1"], "conv2_1": content_acts["conv2_1"]}
        surface_image = decoder.decode(surface_full, skips)
        texture_image = decoder.decode(texture_full, skips)

    with _stage("fuse"):
        if cfg.fuse:
            weights = complementary_weights(texture_image)
            activated = activate_weights(weights, cfg.fusion)
            final = fuse(texture_image, surface_image, activated)
        else:
            final = texture_image
    cgps_time = time.perf_counter() - t1

    return StylizeResult(
        image=final,
        texture_image=texture_image,
        surface_image=surface_image,
        illumination=pair.illumination,
        reflectance=pair.reflectance,
        mask=mask,
        surface_swap=surface_swap,
        texture_swap=texture_swap,
        surface_bank=surface_bank,
        texture_bank=texture_bank,
        timings={
            "retinex": retinex_time,
            "cgps": cgps_time,
            "total": retinex_time + cgps_time,
        },
    )


def stylize_file(cfg: StylizeConfig, encoder=None, decoder=None) -> StylizeResult:
    """Run the pipeline and write the output (plus optional intermediates)."""
    result = run_stylize(cfg, encoder=encoder, decoder=decoder)
    with _stage("write"):
        validate_image(result.image, "output image")
        out = Path(cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_image(result.image, out)
        if cfg.emit_intermediates:
            stem = out.with_suffix("")
            save_image(result.illumination, f"{stem}_illumination.png")
            save_image(np.clip(result.reflectance, 0.0, 1.0), f"{stem}_reflectance.png")
            save_image(result.surface_image, f"{stem}_surface.png")
            save_image(result.texture_image, f"{stem}_texture.png")
    return result
