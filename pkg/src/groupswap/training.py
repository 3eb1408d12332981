"""Decoder training on photo + artwork reconstruction.

The frozen encoder provides targets and skip activations; the decoder is
optimized with Adam against the pixel/perceptual/tv loss. Batches mix the
two corpora 1:1 and use random square crops so shapes stay fixed.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .codec import LossWeights, VggDecoder, VggEncoder, compute_loss
from .errors import ConfigurationError
from .imaging import load_image, resize
from .weights import save_tensors, synthesize_decoder

_IMAGE_EXTS = {".png", ".jpg", ".jpeg"}


@dataclass
class TrainConfig:
    photos_dir: str
    artworks_dir: str
    out_dir: str
    batch: int = 16
    lr: float = 1e-4
    epochs: int = 5
    crop: int = 256
    iterations: int | None = None  # when set, caps the run and overrides epochs
    subset: int | None = None  # when set, caps total training images
    seed: int = 0

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.crop < 32:
            raise ValueError(f"crop must be >= 32, got {self.crop}")


def _list_images(root: str, what: str) -> list[Path]:
    path = Path(root)
    if not path.is_dir():
        raise ConfigurationError(f"{what} directory does not exist: {root}")
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in _IMAGE_EXTS)
    if not files:
        raise ConfigurationError(f"{what} directory has no images: {root}")
    return files


class _CropSampler:
    """Cached image loading plus seeded random square crops."""

    def __init__(self, files: list[Path], crop: int, rng: np.random.Generator):
        self.files = files
        self.crop = crop
        self.rng = rng
        self._cache: dict[Path, np.ndarray] = {}

    def _load(self, path: Path) -> np.ndarray:
        img = self._cache.get(path)
        if img is None:
            img = load_image(path)
            if img.shape[2] == 1:
                img = np.repeat(img, 3, axis=2)
            short = min(img.shape[0], img.shape[1])
            if short < self.crop:
                img = resize(img, self.crop / short + 1e-9)
            self._cache[path] = img
        return img

    def sample(self, count: int) -> np.ndarray:
        out = np.empty((count, self.crop, self.crop, 3), dtype=np.float32)
        for k in range(count):
            img = self._load(self.files[int(self.rng.integers(len(self.files)))])
            i = int(self.rng.integers(img.shape[0] - self.crop + 1))
            j = int(self.rng.integers(img.shape[1] - self.crop + 1))
            out[k] = img[i : i + self.crop, j : j + self.crop]
        return out


def train_decoder(
    encoder: VggEncoder,
    config: TrainConfig,
    weights: LossWeights | None = None,
    decoder: VggDecoder | None = None,
) -> tuple[VggDecoder, list[dict]]:
    """Train (or continue training) a decoder; returns it with the loss trace.

    Checkpoints land in ``out_dir/decoder_epoch{k}.wt`` and the trace in
    ``out_dir/loss_trace.csv``. The encoder is never modified.
    """
    weights = weights or LossWeights()
    photos = _list_images(config.photos_dir, "photo corpus")
    artworks = _list_images(config.artworks_dir, "artwork corpus")
    if config.subset is not None:
        half = max(1, config.subset // 2)
        photos = photos[:half]
        artworks = artworks[:half]

    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    photo_sampler = _CropSampler(photos, config.crop, rng)
    art_sampler = _CropSampler(artworks, config.crop, rng)

    if decoder is None:
        decoder = VggDecoder(synthesize_decoder(config.seed))
    decoder.train()
    optimizer = torch.optim.Adam(decoder.parameters(), lr=config.lr)

    steps_per_epoch = max(1, (len(photos) + len(artworks)) // config.batch)
    if config.iterations is not None:
        total_iterations = config.iterations
        epochs = 1
        steps_per_epoch = total_iterations
    else:
        epochs = config.epochs
        total_iterations = epochs * steps_per_epoch

    os.makedirs(config.out_dir, exist_ok=True)
    trace: list[dict] = []
    iteration = 0
    layer_cols = [f"perc_{layer}" for layer in weights.perceptual]

    for epoch in range(1, epochs + 1):
        for _ in range(steps_per_epoch):
            if iteration >= total_iterations:
                break
            iteration += 1
            half = config.batch // 2
            arrays = [art_sampler.sample(config.batch - half)]
            if half:
                arrays.insert(0, photo_sampler.sample(half))
            batch = torch.from_numpy(np.concatenate(arrays)).permute(0, 3, 1, 2).contiguous()

            with torch.no_grad():
                acts = encoder.forward(batch)
            recon = decoder.forward(
                acts["conv4_1"], {"conv1_1": acts["conv1_1"], "conv2_1": acts["conv2_1"]}
            )
            loss = compute_loss(encoder, batch, recon, weights, original_acts=acts)
            if not torch.isfinite(loss.total):
                raise RuntimeError(
                    f"non-finite loss at iteration {iteration}: {loss.as_floats()}"
                )
            optimizer.zero_grad()
            loss.total.backward()
            optimizer.step()
            trace.append({"iteration": iteration, **loss.as_floats()})
        save_tensors(Path(config.out_dir) / f"decoder_epoch{epoch}.wt", decoder.state_tensors())

    trace_path = Path(config.out_dir) / "loss_trace.csv"
    with open(trace_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["iteration", "pixel", *layer_cols, "tv", "total"])
        writer.writeheader()
        writer.writerows(trace)
    decoder.eval()
    return decoder, trace
