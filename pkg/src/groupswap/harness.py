"""Ablation studies and the execution-time benchmark.

``ablate_filters`` compares the channel code-rate balance of masks derived
from the multiplicative decomposition against masks derived from the three
smoothing filters. ``ablate_grouping`` renders the same content under
mask-based, fixed-block, full-channel and channel-wise grouping.
``ablate_fusion`` renders fusion off/verbatim/shifted variants.
``run_bench`` times the two pipeline stages on procedural inputs.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .codec import VggDecoder, VggEncoder
from .config import StylizeConfig
from .decompose import ablation_sources, decompose_classical, default_filter_specs
from .errors import ConfigurationError
from .fusion import activate_weights, complementary_weights, fuse
from .grouping import code_rate_stats, fixed_grouping, mask_from_images
from .imaging import load_image, resize, resize_to, save_image
from .pipeline import _group_swap, prepare_input, run_stylize
from .swap import assignments_to_csv

_IMAGE_EXTS = {".png", ".jpg", ".jpeg"}

FILTER_METHODS = ("retinex", "gaussian", "bilateral", "guided")
GROUPING_MODES = ("mask", "fixed", "full", "channelwise")

# Published GPU timings shown for context next to the benchmark table.
GPU_REFERENCE = {512: 0.71, 1024: 1.67}


def _corpus(directory) -> list[Path]:
    path = Path(directory)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in _IMAGE_EXTS) if path.is_dir() else []
    if not files:
        raise ConfigurationError(f"corpus directory has no images: {directory}")
    return files


def ablate_filters(encoder: VggEncoder, corpus_dir, out_dir, floor: float = 0.01) -> dict:
    """Per-image code-rate stats for each mask-derivation method.

    Writes ``code_rates.csv`` (one row per image and method) and
    ``balance_table.csv`` (one row per image, one balance column per
    method); returns the mean balance per method.
    """
    files = _corpus(corpus_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in files:
        img = load_image(path)
        specs = default_filter_specs(img.shape[0], img.shape[1])
        pair = decompose_classical(img, floor=floor)
        sources = {"retinex": (pair.illumination, pair.reflectance)}
        for kind in ("gaussian", "bilateral", "guided"):
            sources[kind] = ablation_sources(img, specs[kind])
        for method in FILTER_METHODS:
            surface_img, texture_img = sources[method]
            mask = mask_from_images(encoder, surface_img, texture_img)
            stats = code_rate_stats(mask)
            rows.append(
                {
                    "image": path.name,
                    "method": method,
                    "surface": stats.surface,
                    "texture": stats.texture,
                    "balance": stats.balance,
                }
            )
    with open(out / "code_rates.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["image", "method", "surface", "texture", "balance"])
        writer.writeheader()
        writer.writerows(rows)
    with open(out / "balance_table.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", *FILTER_METHODS])
        for path in files:
            per_image = {r["method"]: r["balance"] for r in rows if r["image"] == path.name}
            writer.writerow([path.name, *[per_image[m] for m in FILTER_METHODS]])
    means = {
        method: statistics.mean(r["balance"] for r in rows if r["method"] == method)
        for method in FILTER_METHODS
    }
    print("mean |surface_count - C/2| per method:")
    for method in FILTER_METHODS:
        print(f"  {method:10s} {means[method]:8.2f}")
    return {"mean_balance": means, "rows": rows}


def _encode_for_grouping(encoder, cfg: StylizeConfig, content_img, style_img):
    content_acts = encoder.encode(content_img, ("conv1_1", "conv2_1", "conv4_1"))
    style_features = []
    for s in cfg.scales:
        scaled = style_img if s == 1.0 else resize(style_img, s)
        style_features.append((float(s), encoder.encode(scaled, ("conv4_1",))["conv4_1"]))
    return content_acts, style_features


def ablate_grouping(
    encoder: VggEncoder,
    decoder: VggDecoder,
    corpus_dir,
    out_dir,
    cfg: StylizeConfig,
    group_size: int = 64,
) -> list[Path]:
    """Side-by-side outputs for the four grouping strategies.

    The first corpus image is the style, the rest are contents. Each group
    is swapped independently and the swapped groups are summed back into a
    full feature map before decoding.
    """
    files = _corpus(corpus_dir)
    if len(files) < 2:
        raise ConfigurationError("grouping ablation needs a style image plus at least one content")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    style_img = prepare_input(load_image(files[0]), cfg)
    written = []
    for path in files[1:]:
        content_img = prepare_input(load_image(path), cfg)
        content_acts, style_features = _encode_for_grouping(encoder, cfg, content_img, style_img)
        feat = content_acts["conv4_1"]
        channels = feat.shape[0]
        pair = decompose_classical(content_img, floor=cfg.floor)
        retinex_mask = mask_from_images(encoder, pair.illumination, pair.reflectance)
        mode_masks = {
            "mask": [retinex_mask, ~retinex_mask],
            "fixed": fixed_grouping(channels, group_size),
            "full": fixed_grouping(channels, channels),
            "channelwise": fixed_grouping(channels, 1),
        }
        skips = {"conv1_1": content_acts["conv1_1"], "conv2_1": content_acts["conv2_1"]}
        for mode in GROUPING_MODES:
            combined = torch.zeros_like(feat)
            for g, group_mask in enumerate(mode_masks[mode]):
                swapped, result, bank = _group_swap(
                    feat, style_features, group_mask, group_mask, cfg.patch, compact=True
                )
                combined += swapped
                if mode == "mask":
                    tag = "surface" if g == 0 else "texture"
                    assignments_to_csv(result, bank, out / f"{path.stem}_assignments_{tag}.csv")
            image = decoder.decode(combined, skips)
            target = out / f"{path.stem}_{mode}.png"
            save_image(image, target)
            written.append(target)
    return written


def ablate_fusion(
    encoder: VggEncoder,
    decoder: VggDecoder,
    corpus_dir,
    out_dir,
    cfg: StylizeConfig,
    relaxation: float | None = None,
) -> list[Path]:
    """Outputs with fusion off, verbatim activation and shifted activation.

    ``relaxation`` additionally writes texture + alpha * surface with a
    global alpha, the global-weight variant the adaptive map replaces.
    """
    files = _corpus(corpus_dir)
    if len(files) < 2:
        raise ConfigurationError("fusion ablation needs a style image plus at least one content")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for path in files[1:]:
        run_cfg = replace(
            cfg,
            content=str(path),
            style=str(files[0]),
            fuse=False,
        )
        result = run_stylize(run_cfg, encoder=encoder, decoder=decoder)
        weights = complementary_weights(result.texture_image)
        variants = {
            "off": result.texture_image,
            "verbatim": fuse(
                result.texture_image,
                result.surface_image,
                activate_weights(weights, replace(cfg.fusion, mode="verbatim")),
            ),
            "shifted": fuse(
                result.texture_image,
                result.surface_image,
                activate_weights(weights, replace(cfg.fusion, mode="shifted")),
            ),
        }
        if relaxation is not None:
            alpha = np.full(weights.shape, float(relaxation), dtype=np.float32)
            variants[f"relaxation_{relaxation:g}"] = fuse(
                result.texture_image, result.surface_image, alpha
            )
        for tag, image in variants.items():
            target = out / f"{path.stem}_fusion_{tag}.png"
            save_image(image, target)
            written.append(target)
    return written


def procedural_image(size: int, seed: int) -> np.ndarray:
    """Deterministic natural-ish test image: multi-octave value noise plus
    a brightness gradient and a dark disc."""
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size, 3), dtype=np.float32)
    for octave, weight in ((4, 0.45), (16, 0.3), (64, 0.25)):
        grid = rng.random((octave, octave, 3), dtype=np.float32)
        img += weight * resize_to(grid, size, size)
    ramp = np.linspace(0.15, 0.85, size, dtype=np.float32)
    img = 0.65 * img + 0.35 * ramp[:, None, None]
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    cy, cx, r = rng.random(3) * np.array([0.6, 0.6, 0.2]) + np.array([0.2, 0.2, 0.08])
    disc = ((yy - cy) ** 2 + (xx - cx) ** 2) < r * r
    img[disc] *= 0.25
    return np.clip(img, 0.0, 1.0)


@dataclass
class BenchReport:
    sizes: list[int]
    rows: dict[str, dict[int, float]]  # stage -> size -> median seconds

    def table_lines(self) -> list[str]:
        header = "stage".ljust(10) + "".join(f"{s:>12d}" for s in self.sizes)
        lines = [header]
        for stage in ("retinex", "cgps", "total"):
            lines.append(
                stage.ljust(10) + "".join(f"{self.rows[stage][s]:12.3f}" for s in self.sizes)
            )
        return lines


def run_bench(
    cfg: StylizeConfig,
    sizes: list[int],
    runs: int = 5,
    out_csv=None,
    encoder: VggEncoder | None = None,
    decoder: VggDecoder | None = None,
) -> BenchReport:
    """Median per-stage wall-clock over >= ``runs`` runs at each size."""
    if runs < 1:
        raise ConfigurationError("bench needs at least one run")
    if encoder is None:
        encoder = VggEncoder.from_file(cfg.encoder_weights)
    if decoder is None:
        decoder = VggDecoder.from_file(cfg.decoder_weights)
    rows = {stage: {} for stage in ("retinex", "cgps", "total")}
    for size in sizes:
        content = procedural_image(size, seed=2024)
        style = procedural_image(size, seed=7)
        samples = {"retinex": [], "cgps": [], "total": []}
        run_cfg = replace(cfg, fuse=False, no_resize=True)
        for _ in range(runs):
            result = run_stylize(
                run_cfg, encoder=encoder, decoder=decoder,
                content_img=content, style_img=style,
            )
            for stage in samples:
                samples[stage].append(result.timings[stage])
            del result  # release the retained patch banks before the next run
        for stage in samples:
            rows[stage][size] = statistics.median(samples[stage])
    report = BenchReport(sizes=list(sizes), rows=rows)
    for line in report.table_lines():
        print(line)
    refs = ", ".join(
        f"total {GPU_REFERENCE[s]:.2f} s @ {s} px" for s in sizes if s in GPU_REFERENCE
    )
    if refs:
        print(f"GPU reference timings (RTX 2080 Ti): {refs}")
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage", *sizes])
            for stage in ("retinex", "cgps", "total"):
                writer.writerow([stage, *[rows[stage][s] for s in sizes]])
    return report
