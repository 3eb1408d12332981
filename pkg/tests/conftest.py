"""Shared fixtures: deterministic weights, the shipped corpus, tiny images."""

from pathlib import Path

import numpy as np
import pytest

from groupswap.codec import VggDecoder, VggEncoder
from groupswap.weights import save_tensors, synthesize_decoder, synthesize_encoder

REPO = Path(__file__).resolve().parents[1]
CORPUS_DIR = REPO / "assets" / "corpus"
PAIRS_DIR = REPO / "assets" / "pairs"

WEIGHT_SEED = 0


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS_DIR


@pytest.fixture(scope="session")
def pairs_dir() -> Path:
    return PAIRS_DIR


@pytest.fixture(scope="session")
def encoder() -> VggEncoder:
    return VggEncoder(synthesize_encoder(WEIGHT_SEED))


@pytest.fixture(scope="session")
def decoder() -> VggDecoder:
    return VggDecoder(synthesize_decoder(WEIGHT_SEED))


@pytest.fixture(scope="session")
def weight_files(tmp_path_factory) -> dict[str, str]:
    d = tmp_path_factory.mktemp("weights")
    enc = d / "encoder.wt"
    dec = d / "decoder.wt"
    save_tensors(enc, synthesize_encoder(WEIGHT_SEED))
    save_tensors(dec, synthesize_decoder(WEIGHT_SEED))
    return {"encoder": str(enc), "decoder": str(dec)}


def random_image(rng: np.random.Generator, h: int, w: int, channels: int = 3) -> np.ndarray:
    return rng.random((h, w, channels), dtype=np.float32)
