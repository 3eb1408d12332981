#!/usr/bin/env python3
"""Regenerate the committed test corpus under assets/.

The corpus is a set of deterministic procedural images: layered value
noise, brightness ramps, soft shapes and dark regions, varied per seed so
the set spans bright/dark and smooth/textured content. Run from the repo
root; PNGs are written to assets/corpus and assets/pairs.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from groupswap.imaging import resize_to, save_image  # noqa: E402


def value_noise(rng: np.ndarray, size: int, octaves) -> np.ndarray:
    img = np.zeros((size, size, 3), dtype=np.float32)
    total = 0.0
    for cells, weight in octaves:
        grid = rng.random((cells, cells, 3), dtype=np.float32)
        img += weight * resize_to(grid, size, size)
        total += weight
    return img / total


def make_image(seed: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    octaves = [(3, 0.5), (9, 0.3), (36, 0.2)]
    if seed % 3 == 0:
        octaves = [(4, 0.35), (16, 0.3), (min(64, size // 2), 0.35)]  # finer texture
    img = value_noise(rng, size, octaves)

    # Brightness ramp in a random direction.
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / (size - 1)
    angle = rng.random() * 2 * np.pi
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    ramp = (ramp - ramp.min()) / (ramp.max() - ramp.min())
    lo, hi = 0.1 + 0.3 * rng.random(), 0.6 + 0.4 * rng.random()
    img = 0.6 * img + 0.4 * (lo + (hi - lo) * ramp)[:, :, None]

    # A few soft elliptical patches: some dark, some tinted.
    for _ in range(int(rng.integers(2, 5))):
        cy, cx = rng.random(2) * 0.8 + 0.1
        ry, rx = 0.05 + rng.random(2) * 0.2
        d = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        soft = np.exp(-d)[:, :, None].astype(np.float32)
        if rng.random() < 0.4:
            img = img * (1.0 - 0.85 * soft)  # dark region
        else:
            tint = rng.random(3).astype(np.float32)
            img = img * (1.0 - 0.5 * soft) + 0.5 * soft * tint

    # Occasional stripes for oriented texture.
    if seed % 4 == 1:
        freq = 8 + int(rng.integers(0, 12))
        stripes = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xx + 0.3 * yy))
        img = 0.8 * img + 0.2 * stripes[:, :, None]

    return np.clip(img, 0.0, 1.0).astype(np.float32)


def main() -> int:
    root = Path(__file__).resolve().parents[1] / "assets"
    corpus = root / "corpus"
    pairs = root / "pairs"
    corpus.mkdir(parents=True, exist_ok=True)
    pairs.mkdir(parents=True, exist_ok=True)

    for k in range(12):
        save_image(make_image(seed=100 + k, size=144), corpus / f"img{k:02d}.png")

    save_image(make_image(seed=500, size=256), pairs / "content_256.png")
    save_image(make_image(seed=501, size=160), pairs / "style_160.png")
    save_image(make_image(seed=502, size=96), pairs / "style_96.png")
    print(f"wrote corpus to {corpus} and pairs to {pairs}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
