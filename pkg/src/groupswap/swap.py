"""Patch extraction, scoring and swapping over feature maps.

Every stride-1 window of the content feature map is replaced by the
best-matching style patch. The match score is the unnormalized inner
product of channel-mean-subtracted patches, which is sensitive to both
direction and magnitude (a scaled-up patch can out-score an identical one;
normalized cross-correlation would tie them).

Two routes produce the same result:

* ``swap_bruteforce`` scores every (location, patch) pair explicitly; it is
  the reference implementation.
* ``swap_accelerated`` runs the search as a batched correlation against the
  stacked patch bank followed by one-hot selection and overlap-add
  reconstruction. Scores are computed in float32 blocks; any location whose
  top-2 margin falls below a rounding-error bound is re-scored exactly in
  float64, so the selected indices match the brute-force route.

Ties always resolve to the lowest bank index. Reconstruction places the
winning raw (uncentered) patches and divides each cell by its overlap count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import torch

from .imaging import resize

DEFAULT_PATCH = 3
TIE_GAP = 1e-4  # documented tie zone for oracle comparisons

# float32 unit roundoff; used for the certified-argmax margin.
_EPS32 = float(np.finfo(np.float32).eps)


def center_channels(feature: torch.Tensor) -> torch.Tensor:
    """Subtract the spatial mean of every channel."""
    if feature.ndim != 3 or feature.numel() == 0:
        raise ValueError(f"expected a non-empty (C, h, w) feature map, got {tuple(feature.shape)}")
    return feature - feature.mean(dim=(1, 2), keepdim=True)


def upcc_score(content_patch: torch.Tensor, style_patch: torch.Tensor) -> float:
    """Unnormalized inner product of two (already centered) patches."""
    if content_patch.shape != style_patch.shape:
        raise ValueError(
            f"patch shape mismatch: {tuple(content_patch.shape)} vs {tuple(style_patch.shape)}"
        )
    return float((content_patch.double() * style_patch.double()).sum())


def _windows(feature: torch.Tensor, p: int) -> torch.Tensor:
    """All stride-1 (C, p, p) windows in row-major order: (L, C, p, p)."""
    c, h, w = feature.shape
    u = feature.unfold(1, p, 1).unfold(2, p, 1)  # (C, nh, nw, p, p)
    return u.permute(1, 2, 0, 3, 4).reshape((h - p + 1) * (w - p + 1), c, p, p)


@dataclass
class PatchBank:
    """Ordered style patches with per-patch provenance.

    ``patches`` holds raw values used for reconstruction; ``centered`` holds
    the matching windows of the channel-mean-subtracted source feature, used
    for scoring. Order is stable: scales in build order, then row-major
    spatial origin.
    """

    patches: torch.Tensor  # (N, C, p, p) float32
    centered: torch.Tensor  # (N, C, p, p) float32
    scales: torch.Tensor  # (N,) float32
    origins: torch.Tensor  # (N, 2) int64, (row, col) on the source grid

    def __post_init__(self):
        if self.patches.ndim != 4 or self.patches.shape != self.centered.shape:
            raise ValueError("patch bank tensors must share an (N, C, p, p) shape")
        if len(self.patches) == 0:
            raise ValueError("patch bank is empty")

    def __len__(self) -> int:
        return self.patches.shape[0]

    @property
    def p(self) -> int:
        return self.patches.shape[2]

    @property
    def channels(self) -> int:
        return self.patches.shape[1]

    def provenance(self, index: int) -> tuple[float, int, int]:
        return (
            float(self.scales[index]),
            int(self.origins[index, 0]),
            int(self.origins[index, 1]),
        )

    @classmethod
    def concat(cls, banks: list["PatchBank"]) -> "PatchBank":
        if not banks:
            raise ValueError("no banks to concatenate")
        return cls(
            patches=torch.cat([b.patches for b in banks]),
            centered=torch.cat([b.centered for b in banks]),
            scales=torch.cat([b.scales for b in banks]),
            origins=torch.cat([b.origins for b in banks]),
        )


def extract_patches(feature: torch.Tensor, p: int = DEFAULT_PATCH, stride: int = 1,
                    scale: float = 1.0) -> PatchBank:
    """Bank of all (h-p+1)(w-p+1) stride-1 windows of a feature map."""
    if stride != 1:
        raise ValueError("only stride 1 is supported")
    if feature.ndim != 3:
        raise ValueError(f"expected a (C, h, w) feature map, got {tuple(feature.shape)}")
    c, h, w = feature.shape
    if p < 1 or h < p or w < p:
        raise ValueError(f"feature spatial size {h}x{w} is smaller than patch size {p}")
    if not torch.isfinite(feature).all():
        raise ValueError("feature map contains non-finite values")
    feature = feature.float()
    nh, nw = h - p + 1, w - p + 1
    rows = torch.arange(nh).repeat_interleave(nw)
    cols = torch.arange(nw).repeat(nh)
    return PatchBank(
        patches=_windows(feature, p).contiguous(),
        centered=_windows(center_channels(feature), p).contiguous(),
        scales=torch.full((nh * nw,), float(scale)),
        origins=torch.stack([rows, cols], dim=1),
    )


def build_multiscale_bank(
    style_image: np.ndarray | None,
    scales: list[float],
    encoder,
    p: int = DEFAULT_PATCH,
    channel_mask: torch.Tensor | None = None,
    features: list[tuple[float, torch.Tensor]] | None = None,
    layer: str = "conv4_1",
) -> PatchBank:
    """Concatenated patch banks of the style encoded at each scale.

    ``features`` may carry pre-encoded (scale, feature) pairs to avoid
    re-encoding; otherwise the style image is resized and encoded per scale.
    ``channel_mask`` zeroes the complementary channel group before patch
    extraction.
    """
    if features is None:
        if style_image is None:
            raise ValueError("either a style image or pre-encoded features are required")
        if not scales:
            raise ValueError("scales must be non-empty")
        features = []
        for s in scales:
            scaled = style_image if s == 1.0 else resize(style_image, s)
            try:
                acts = encoder.encode(scaled, (layer,))
            except ValueError as exc:
                raise ValueError(f"style scale {s}: {exc}") from exc
            features.append((float(s), acts[layer]))
    banks = []
    for s, feat in features:
        if channel_mask is not None:
            feat = torch.where(channel_mask.view(-1, 1, 1), feat, torch.zeros((), dtype=feat.dtype))
        if min(feat.shape[1], feat.shape[2]) < p:
            raise ValueError(
                f"style scale {s}: feature grid {tuple(feat.shape[1:])} is smaller than patch size {p}"
            )
        banks.append(extract_patches(feat, p, scale=s))
    return PatchBank.concat(banks)


@dataclass
class SwapResult:
    """Swapped feature map plus per-location selection diagnostics."""

    swapped: torch.Tensor  # (C, h, w) float32
    assignment: torch.Tensor  # (nh, nw) int64 bank indices
    gap: torch.Tensor  # (nh, nw) float64 top-2 score margin (inf for 1-patch banks)

    def tie_count(self, threshold: float = TIE_GAP) -> int:
        return int((self.gap <= threshold).sum())


def _overlap_counts_1d(n: int, p: int) -> torch.Tensor:
    i = torch.arange(n, dtype=torch.float64)
    lo = torch.clamp(i - p + 1, min=0)
    hi = torch.clamp(i, max=n - p)
    return hi - lo + 1


def _top2_lowest_tie(scores: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(best, lowest best index, second-best) per row of an (L, N) block."""
    n = scores.shape[1]
    best, _ = scores.max(dim=1)
    cand = torch.where(scores == best[:, None], torch.arange(n), n)
    idx = cand.min(dim=1).values
    if n == 1:
        second = torch.full_like(best, -np.inf)
    else:
        masked = scores.clone()
        masked[torch.arange(scores.shape[0]), idx] = -np.inf
        second, _ = masked.max(dim=1)
    return best, idx, second


def _check_swap_inputs(content: torch.Tensor, bank: PatchBank) -> tuple[int, int, int]:
    if content.ndim != 3:
        raise ValueError(f"expected a (C, h, w) content feature, got {tuple(content.shape)}")
    if not torch.isfinite(content).all():
        raise ValueError("content feature contains non-finite values")
    c, h, w = content.shape
    p = bank.p
    if bank.channels != c:
        raise ValueError(f"bank has {bank.channels} channels, content has {c}")
    if h < p or w < p:
        raise ValueError(f"content grid {h}x{w} is smaller than patch size {p}")
    return c, h, w


def _reconstruct(
    bank_patches: torch.Tensor, idx: torch.Tensor, shape: tuple[int, int, int], p: int
) -> torch.Tensor:
    """Overlap-add the selected raw patches and normalize by overlap counts."""
    c, h, w = shape
    loc = idx.shape[0]
    nw = w - p + 1
    rows = torch.arange(loc) // nw
    cols = torch.arange(loc) % nw
    acc = torch.zeros((c, h * w), dtype=torch.float64)
    step = max(1, int(16e6 / (c * p * p)))  # bound the gathered-patch block
    for l0 in range(0, loc, step):
        l1 = min(l0 + step, loc)
        chosen = bank_patches[idx[l0:l1]].double()
        for di in range(p):
            for dj in range(p):
                pos = (rows[l0:l1] + di) * w + (cols[l0:l1] + dj)
                acc.index_add_(1, pos, chosen[:, :, di, dj].t())
    counts = torch.outer(_overlap_counts_1d(h, p), _overlap_counts_1d(w, p)).reshape(-1)
    return (acc / counts).reshape(c, h, w).float()


def swap_bruteforce(content: torch.Tensor, bank: PatchBank) -> SwapResult:
    """Reference swap: exhaustively score every location against every patch."""
    c, h, w = _check_swap_inputs(content, bank)
    p = bank.p
    nh, nw = h - p + 1, w - p + 1
    centered = center_channels(content.double())
    bank_centered = bank.centered.double()
    assignment = torch.zeros((nh, nw), dtype=torch.int64)
    gap = torch.zeros((nh, nw), dtype=torch.float64)
    acc = torch.zeros((c, h, w), dtype=torch.float64)
    cnt = torch.zeros((1, h, w), dtype=torch.float64)
    raw = bank.patches.double()
    for i in range(nh):
        for j in range(nw):
            window = centered[:, i : i + p, j : j + p]
            scores = (bank_centered * window).sum(dim=(1, 2, 3))
            best, idx, second = _top2_lowest_tie(scores[None])
            k = int(idx[0])
            assignment[i, j] = k
            gap[i, j] = float(best[0]) - float(second[0])
            acc[:, i : i + p, j : j + p] += raw[k]
            cnt[:, i : i + p, j : j + p] += 1.0
    swapped = (acc / cnt).float()
    return SwapResult(swapped=swapped, assignment=assignment, gap=gap)


def bruteforce_assignments(
    content: torch.Tensor, bank: PatchBank, locations: list[tuple[int, int]]
) -> list[tuple[int, float]]:
    """(index, gap) of the exhaustive search at selected window locations."""
    _check_swap_inputs(content, bank)
    p = bank.p
    centered = center_channels(content.double())
    bank_centered = bank.centered.double()
    out = []
    for i, j in locations:
        window = centered[:, i : i + p, j : j + p]
        scores = (bank_centered * window).sum(dim=(1, 2, 3))
        best, idx, second = _top2_lowest_tie(scores[None])
        out.append((int(idx[0]), float(best[0]) - float(second[0])))
    return out


def _rescore_exact(
    windows64: torch.Tensor, bank_mat: torch.Tensor, chunk: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Exact float64 top-2 of selected windows against the whole bank."""
    n = bank_mat.shape[0]
    best = torch.full((windows64.shape[0],), -np.inf, dtype=torch.float64)
    second = torch.full_like(best, -np.inf)
    idx = torch.zeros(windows64.shape[0], dtype=torch.int64)
    for j0 in range(0, n, chunk):
        block = windows64 @ bank_mat[j0 : j0 + chunk].double().t()
        b, a, s = _top2_lowest_tie(block)
        a = a + j0
        # Merge running top-2 with the block's top-2; earlier chunks hold
        # lower indices, so only strictly-greater scores displace the best.
        new_second = torch.where(b > best, torch.maximum(best, s), torch.maximum(second, b))
        take = b > best
        idx = torch.where(take, a, idx)
        best = torch.maximum(best, b)
        second = new_second
    return best, idx, second


def swap_accelerated(content: torch.Tensor, bank: PatchBank) -> SwapResult:
    """Correlation-based swap; indices certified equal to the brute-force route.

    The content windows are scored against the stacked bank by blocked
    matrix products in float32. A per-location error bound (patch-dot
    roundoff, Cauchy-Schwarz form) flags locations whose top-2 margin could
    be a rounding artifact; those are re-scored exactly in float64.
    Selection is followed by overlap-add deconvolution of the raw patches.
    """
    c, h, w = _check_swap_inputs(content, bank)
    p = bank.p
    nh, nw = h - p + 1, w - p + 1
    n = len(bank)
    d = c * p * p

    windows = _windows(center_channels(content.float()), p).reshape(-1, d)
    bank_mat = bank.centered.reshape(n, d).float()

    loc = windows.shape[0]
    chunk = max(256, min(n, int(16e6 / max(loc, 1))))
    best = torch.full((loc,), -np.inf, dtype=torch.float32)
    second = torch.full_like(best, -np.inf)
    idx = torch.zeros(loc, dtype=torch.int64)
    for j0 in range(0, n, chunk):
        block = windows @ bank_mat[j0 : j0 + chunk].t()
        b, a, s = _top2_lowest_tie(block)
        a = a + j0
        new_second = torch.where(b > best, torch.maximum(best, s), torch.maximum(second, b))
        idx = torch.where(b > best, a, idx)
        best = torch.maximum(best, b)
        second = new_second

    best = best.double()
    second = second.double()
    gap = best - second

    # Certified argmax: float32 dot-product error is bounded by
    # d * eps * |w| * |p|; margins inside the bound get an exact re-score.
    w_norms = windows.norm(dim=1).double()
    p_norm_max = float(bank_mat.norm(dim=1).max())
    margin = 2.0 * d * _EPS32 * w_norms * p_norm_max
    recheck = (gap <= torch.maximum(margin, torch.tensor(10.0 * TIE_GAP, dtype=torch.float64))).nonzero().flatten()
    if len(recheck) > 0:
        rb, ri, rs = _rescore_exact(windows[recheck].double(), bank_mat, chunk)
        best[recheck] = rb
        idx[recheck] = ri
        second[recheck] = rs
        gap = best - second

    swapped = _reconstruct(bank.patches, idx, (c, h, w), p)
    return SwapResult(
        swapped=swapped,
        assignment=idx.reshape(nh, nw),
        gap=gap.reshape(nh, nw),
    )


def assignments_to_csv(result: SwapResult, bank: PatchBank, path) -> None:
    """Write one row per content window: location, bank index, provenance."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "bank_index", "scale", "origin_row", "origin_col"])
        nh, nw = result.assignment.shape
        for i in range(nh):
            for j in range(nw):
                k = int(result.assignment[i, j])
                scale, orow, ocol = bank.provenance(k)
                writer.writerow([i, j, k, scale, orow, ocol])
