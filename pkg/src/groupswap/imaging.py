"""Image I/O, resizing and luminance conversion.

An image is a float32 numpy array of shape (H, W, C) with C in {1, 3} and
values in [0, 1]. Every public function returns arrays satisfying that
contract; reflectance-style arrays that exceed [0, 1] are handled by the
decomposition module, not here.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage

# BT.601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float32)

_SAVE_FORMATS = {".png": "PNG", ".jpg": "JPEG", ".jpeg": "JPEG"}


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check the (H, W, C) / [0, 1] contract and return the array unchanged."""
    if not isinstance(img, np.ndarray) or img.ndim != 3:
        raise ValueError(f"{name} must be an (H, W, C) numpy array")
    if img.shape[2] not in (1, 3):
        raise ValueError(f"{name} must have 1 or 3 channels, got {img.shape[2]}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"{name} has an empty spatial dimension: {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError(f"{name} contains non-finite values")
    lo, hi = float(img.min()), float(img.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{name} values outside [0, 1]: min={lo}, max={hi}")
    return img


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Load a PNG/JPEG file as a float32 (H, W, C) array in [0, 1].

    8-bit value v maps to v / 255. Grayscale files load with C=1, everything
    else is converted to RGB.
    """
    with PILImage.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float32)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return validate_image(np.ascontiguousarray(arr / 255.0), str(path))


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Write an image as an 8-bit raster; value v maps to round(v * 255)."""
    validate_image(img)
    ext = os.path.splitext(str(path))[1].lower()
    fmt = _SAVE_FORMATS.get(ext)
    if fmt is None:
        raise ValueError(f"unsupported output format '{ext}' (use .png or .jpg)")
    quantized = np.floor(img * 255.0 + 0.5).astype(np.uint8)
    if quantized.shape[2] == 1:
        pil = PILImage.fromarray(quantized[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(quantized, mode="RGB")
    pil.save(path, format=fmt)


def _axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel-center sampling with edge clamping.
    x = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1.0)
    i0 = np.floor(x).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, (x - i0)


def resize_to(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample to an explicit size with edge clamping."""
    validate_image(img)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size {out_h}x{out_w} is empty")
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.copy()
    r0, r1, fr = _axis_coords(h, out_h)
    c0, c1, fc = _axis_coords(w, out_w)
    rows = img[r0] * (1.0 - fr)[:, None, None] + img[r1] * fr[:, None, None]
    out = rows[:, c0] * (1.0 - fc)[None, :, None] + rows[:, c1] * fc[None, :, None]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def resize(img: np.ndarray, scale: float) -> np.ndarray:
    """Bilinear resize by a scale factor; output size is round(scale * size)."""
    validate_image(img)
    if not np.isfinite(scale) or scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    h, w = img.shape[:2]
    out_h = int(h * scale + 0.5)
    out_w = int(w * scale + 0.5)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"scale {scale} yields an empty {out_h}x{out_w} output")
    return resize_to(img, out_h, out_w)


def to_luminance(img: np.ndarray) -> np.ndarray:
    """Single-channel BT.601 luminance; identity (copy) on 1-channel input."""
    validate_image(img)
    if img.shape[2] == 1:
        return img.copy()
    # double-precision dot so the (1, 1, 1) -> 1.0 endpoint is exact in f32
    lum = img.astype(np.float64) @ LUMA_WEIGHTS.astype(np.float64)
    return np.clip(lum[:, :, None], 0.0, 1.0).astype(np.float32)
