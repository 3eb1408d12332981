import numpy as np
import pytest

from groupswap.decompose import (
    DecompositionPair,
    FilterSpec,
    ablation_sources,
    apply_filter,
    decompose_classical,
    default_filter_specs,
    default_smoothing,
    gaussian_taps,
    texture_residual,
)
from groupswap.imaging import to_luminance

from conftest import random_image

ALL_KINDS = ("gaussian", "bilateral", "guided")


def dense_gaussian_oracle(img2d: np.ndarray, size: int, sigma: float) -> np.ndarray:
    """Full 2-D convolution with the separable kernel's outer product,
    edge-clamped borders, nested loops."""
    taps = gaussian_taps(size, sigma)
    kernel = np.outer(taps, taps)
    r = size // 2
    h, w = img2d.shape
    padded = np.pad(img2d, r, mode="edge")
    out = np.zeros_like(img2d, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for di in range(size):
                for dj in range(size):
                    acc += kernel[di, dj] * padded[i + di, j + dj]
            out[i, j] = acc
    return out


def test_uniform_image_decomposition():
    img = np.full((12, 10, 3), 0.5, dtype=np.float32)
    pair = decompose_classical(img)
    assert np.allclose(pair.illumination, 0.5, atol=1e-6)
    assert np.allclose(pair.reflectance, 1.0, atol=1e-5)


def test_all_black_image_guard_branch():
    img = np.zeros((8, 8, 3), dtype=np.float32)
    pair = decompose_classical(img, floor=0.01)
    assert np.allclose(pair.illumination, 0.01)
    assert np.allclose(pair.reflectance, 0.0)


def test_ramp_against_dense_convolution_oracle():
    ramp = np.linspace(0.1, 0.9, 16, dtype=np.float32)
    img = np.repeat(np.tile(ramp, (12, 1))[:, :, None], 3, axis=2)
    spec = FilterSpec("gaussian", size=13, sigma=2.0)
    pair = decompose_classical(img, smoothing=spec, floor=0.01)
    lum = to_luminance(img)[:, :, 0].astype(np.float64)
    expected = np.clip(dense_gaussian_oracle(lum, 13, 2.0), 0.01, 1.0)
    assert np.abs(pair.illumination[:, :, 0] - expected).max() < 1e-6
    assert np.abs(pair.reflectance - img / pair.illumination).max() < 1e-6


def test_reconstruction_exactness_random():
    rng = np.random.default_rng(7)
    for _ in range(5):
        img = random_image(rng, 20, 15)
        pair = decompose_classical(img)
        recon = pair.reflectance * pair.illumination
        assert np.abs(recon - img).max() <= 1e-6


def test_illumination_bounds():
    rng = np.random.default_rng(8)
    img = random_image(rng, 24, 24)
    pair = decompose_classical(img, floor=0.05)
    lum = to_luminance(img)
    assert pair.illumination.max() <= lum.max() + 1e-6
    assert pair.illumination.min() >= 0.05
    assert pair.reflectance.min() >= 0.0
    assert np.isfinite(pair.reflectance).all()


def test_floor_validation():
    img = np.full((8, 8, 3), 0.5, dtype=np.float32)
    for bad in (0.0, -0.1, 0.2):
        with pytest.raises(ValueError):
            decompose_classical(img, floor=bad)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_filters_preserve_constants(kind):
    img = np.full((14, 11, 3), 0.42, dtype=np.float32)
    spec = FilterSpec(kind, size=5, sigma=1.5)
    out = apply_filter(img, spec)
    assert np.allclose(out, 0.42, atol=1e-5)


def test_gaussian_impulse_matches_kernel():
    img = np.zeros((9, 9, 1), dtype=np.float32)
    img[4, 4, 0] = 1.0
    out = apply_filter(img, FilterSpec("gaussian", size=5, sigma=1.0))
    taps = gaussian_taps(5, 1.0)
    expected = np.outer(taps, taps)
    assert np.abs(out[2:7, 2:7, 0] - expected).max() < 1e-6
    assert np.abs(out[0, :, 0]).max() == 0.0  # beyond the kernel footprint


def naive_guided_oracle(img2d: np.ndarray, size: int, eps: float) -> np.ndarray:
    """Self-guided filter with nested-loop box means and edge clamping."""
    h, w = img2d.shape
    r = size // 2

    def box(a):
        padded = np.pad(a, r, mode="edge")
        out = np.zeros_like(a)
        for i in range(h):
            for j in range(w):
                out[i, j] = padded[i : i + size, j : j + size].mean()
        return out

    mean = box(img2d)
    var = np.maximum(box(img2d * img2d) - mean * mean, 0.0)
    a = var / (var + eps)
    b = (1.0 - a) * mean
    return box(a) * img2d + box(b)


def test_guided_filter_against_naive_reference():
    rng = np.random.default_rng(9)
    img = random_image(rng, 5, 5, channels=1).astype(np.float64)
    for eps in (1e-3, 1e-1):
        out = apply_filter(img.astype(np.float32), FilterSpec("guided", size=3, eps=eps))
        oracle = naive_guided_oracle(img[:, :, 0], 3, eps)
        assert np.abs(out[:, :, 0] - np.clip(oracle, 0, 1)).max() < 1e-5


def test_guided_filter_strong_smoothing_approaches_window_mean():
    rng = np.random.default_rng(10)
    img = random_image(rng, 5, 5, channels=1)
    out = apply_filter(img, FilterSpec("guided", size=3, eps=1e4))
    # with a huge regularizer a -> 0 and the output is the double box mean
    oracle = naive_guided_oracle(img[:, :, 0].astype(np.float64), 3, 1e4)
    assert np.abs(out[:, :, 0] - oracle).max() < 1e-4


def test_filter_spec_validation():
    with pytest.raises(ValueError, match="odd"):
        FilterSpec("gaussian", size=4)
    with pytest.raises(ValueError, match="kind"):
        FilterSpec("median", size=5)
    with pytest.raises(ValueError):
        FilterSpec("gaussian", size=5, sigma=-1.0)


def test_texture_residual_centered_and_clamped():
    rng = np.random.default_rng(11)
    img = random_image(rng, 10, 10)
    surface, texture = ablation_sources(img, FilterSpec("gaussian", size=7, sigma=2.0))
    assert texture.min() >= 0.0 and texture.max() <= 1.0
    # constant regions keep the residual at the 0.5 shift
    flat = np.full((8, 8, 3), 0.3, dtype=np.float32)
    s2, t2 = ablation_sources(flat, FilterSpec("gaussian", size=5, sigma=1.0))
    assert np.allclose(t2, 0.5, atol=1e-5)
    with pytest.raises(ValueError, match="shape"):
        texture_residual(img, img[:4])


def test_default_smoothing_scales_with_size():
    spec512 = default_smoothing(512, 512)
    spec128 = default_smoothing(128, 128)
    assert abs(spec512.sigma - 25.0) < 1e-9
    assert abs(spec128.sigma - 6.25) < 1e-9
    assert spec512.size % 2 == 1 and spec128.size % 2 == 1
    specs = default_filter_specs(128, 128)
    assert set(specs) == set(ALL_KINDS)


def test_pair_fields():
    img = np.full((6, 6, 3), 0.25, dtype=np.float32)
    pair = decompose_classical(img, floor=0.02)
    assert isinstance(pair, DecompositionPair)
    assert pair.floor == 0.02
    assert pair.illumination.shape == img.shape
    assert pair.reflectance.shape == img.shape
