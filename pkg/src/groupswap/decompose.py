"""Surface/texture decomposition of images.

``decompose_classical`` splits an image S into a smooth illumination field L
(the surface source) and a reflectance image R (the texture source) such
that R * L reproduces S exactly. ``apply_filter`` provides the smoothing
filter bank (Gaussian, bilateral, guided) that plays the same role in the
comparison harness, paired with the shifted residual as its texture image.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import uniform_filter

from .imaging import to_luminance, validate_image

FILTER_KINDS = ("gaussian", "bilateral", "guided")

# Smoothing strength of the default decomposition: sigma 25 px on a 512 px
# image, scaled proportionally with the input.
REFERENCE_SIGMA = 25.0
REFERENCE_SIZE = 512.0
DEFAULT_FLOOR = 0.01


@dataclass(frozen=True)
class FilterSpec:
    """Parameters of one smoothing filter.

    size is the odd window side. sigma is the spatial falloff (gaussian,
    bilateral), sigma_range the intensity falloff (bilateral), eps the
    regularizer (guided).
    """

    kind: str
    size: int
    sigma: float = 2.0
    sigma_range: float = 0.1
    eps: float = 1e-2

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind '{self.kind}'")
        if self.size < 3 or self.size % 2 == 0:
            raise ValueError(f"filter size must be odd and >= 3, got {self.size}")
        if self.sigma <= 0 or self.sigma_range <= 0 or self.eps <= 0:
            raise ValueError("filter parameters must be positive")


@dataclass(frozen=True)
class DecompositionPair:
    """Illumination L, reflectance R and the division floor used to build R.

    L has values in [floor, 1] and the spatial size of the source; R is
    finite and >= 0 but may exceed 1 (it is only clamped for display).
    """

    illumination: np.ndarray
    reflectance: np.ndarray
    floor: float


def gaussian_taps(size: int, sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian kernel of odd length ``size``."""
    r = size // 2
    k = np.arange(-r, r + 1, dtype=np.float64)
    taps = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return (taps / taps.sum()).astype(np.float64)


def default_smoothing(height: int, width: int) -> FilterSpec:
    """Gaussian spec whose sigma scales with the image size."""
    sigma = REFERENCE_SIGMA * max(height, width) / REFERENCE_SIZE
    sigma = max(sigma, 0.5)
    size = 2 * int(np.ceil(3.0 * sigma)) + 1
    return FilterSpec("gaussian", size=max(size, 3), sigma=sigma)


def _smooth_1d(img: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    r = len(taps) // 2
    pad = [(0, 0)] * img.ndim
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="edge")
    out = np.zeros_like(img, dtype=np.float64)
    sl = [slice(None)] * img.ndim
    n = img.shape[axis]
    for k, w in enumerate(taps):
        sl[axis] = slice(k, k + n)
        out += w * padded[tuple(sl)]
    return out


def _gaussian_filter(img: np.ndarray, spec: FilterSpec) -> np.ndarray:
    taps = gaussian_taps(spec.size, spec.sigma)
    return _smooth_1d(_smooth_1d(img.astype(np.float64), taps, 0), taps, 1)


def _bilateral_filter(img: np.ndarray, spec: FilterSpec) -> np.ndarray:
    # Channel-wise bilateral: spatial Gaussian times per-channel range kernel.
    r = spec.size // 2
    x = img.astype(np.float64)
    padded = np.pad(x, ((r, r), (r, r), (0, 0)), mode="edge")
    h, w = x.shape[:2]
    acc = np.zeros_like(x)
    norm = np.zeros_like(x)
    inv_2ss = 1.0 / (2.0 * spec.sigma * spec.sigma)
    inv_2sr = 1.0 / (2.0 * spec.sigma_range * spec.sigma_range)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            shifted = padded[r + dy : r + dy + h, r + dx : r + dx + w]
            ws = np.exp(-(dy * dy + dx * dx) * inv_2ss)
            wt = ws * np.exp(-((shifted - x) ** 2) * inv_2sr)
            acc += wt * shifted
            norm += wt
    return acc / norm


def _box(img: np.ndarray, size: int) -> np.ndarray:
    return uniform_filter(img, size=size, mode="nearest")


def _guided_filter(img: np.ndarray, spec: FilterSpec) -> np.ndarray:
    # Self-guided edge-preserving filter: q = mean(a) * I + mean(b) with
    # a = var / (var + eps), b = (1 - a) * mean, per channel.
    x = img.astype(np.float64)
    out = np.empty_like(x)
    for c in range(x.shape[2]):
        i = x[:, :, c]
        mean = _box(i, spec.size)
        var = _box(i * i, spec.size) - mean * mean
        var = np.maximum(var, 0.0)
        a = var / (var + spec.eps)
        b = (1.0 - a) * mean
        out[:, :, c] = _box(a, spec.size) * i + _box(b, spec.size)
    return out


_FILTERS = {
    "gaussian": _gaussian_filter,
    "bilateral": _bilateral_filter,
    "guided": _guided_filter,
}


def apply_filter(img: np.ndarray, spec: FilterSpec) -> np.ndarray:
    """Smooth an image with the requested filter; output stays in [0, 1]."""
    validate_image(img)
    out = _FILTERS[spec.kind](img, spec)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def texture_residual(img: np.ndarray, filtered: np.ndarray) -> np.ndarray:
    """Shifted residual paired with a filtered surface image.

    The +0.5 shift keeps the residual inside the image range expected by the
    encoder.
    """
    validate_image(img)
    validate_image(filtered)
    if img.shape != filtered.shape:
        raise ValueError("image and filtered image must have the same shape")
    return np.clip(img - filtered + 0.5, 0.0, 1.0).astype(np.float32)


def decompose_classical(
    img: np.ndarray,
    smoothing: FilterSpec | None = None,
    floor: float = DEFAULT_FLOOR,
) -> DecompositionPair:
    """Exact multiplicative decomposition S = R * L.

    L is the smoothed luminance broadcast to all channels and clamped to
    [floor, 1]; R = S / L channel-wise. The clamp (rather than an additive
    guard) keeps the reconstruction exact.
    """
    validate_image(img)
    if not 0.0 < floor <= 0.1:
        raise ValueError(f"floor must be in (0, 0.1], got {floor}")
    if smoothing is None:
        smoothing = default_smoothing(img.shape[0], img.shape[1])
    lum = to_luminance(img)
    smooth = apply_filter(lum, smoothing)
    illum = np.clip(smooth, floor, 1.0).astype(np.float32)
    illum = np.repeat(illum, img.shape[2], axis=2)
    refl = (img / illum).astype(np.float32)
    return DecompositionPair(illumination=illum, reflectance=refl, floor=floor)


def ablation_sources(img: np.ndarray, spec: FilterSpec) -> tuple[np.ndarray, np.ndarray]:
    """(surface, texture) image pair for a smoothing-filter baseline."""
    surface = apply_filter(img, spec)
    return surface, texture_residual(img, surface)


def default_filter_specs(height: int, width: int) -> dict[str, FilterSpec]:
    """Filter bank used by the comparison harness, scaled like the default
    decomposition smoothing."""
    base = default_smoothing(height, width)
    return {
        "gaussian": base,
        "bilateral": replace(base, kind="bilateral", sigma_range=0.1),
        "guided": replace(base, kind="guided", eps=1e-2),
    }
