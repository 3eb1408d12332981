import numpy as np
import pytest
import torch

from groupswap.grouping import (
    code_rate_stats,
    compute_mask,
    fixed_grouping,
    gap,
    mask_from_images,
    split,
)


def test_gap_constant_channel():
    feature = torch.full((4, 5, 5), 3.0)
    assert torch.allclose(gap(feature), torch.full((4,), 3.0))


def test_gap_symmetric_mean():
    feature = torch.zeros(1, 2, 2)
    feature[0, 0] = 1.0
    assert float(gap(feature)[0]) == pytest.approx(0.5)


def test_gap_matches_double_loop_oracle():
    rng = np.random.default_rng(0)
    feature = torch.from_numpy(rng.standard_normal((3, 8, 8)).astype(np.float32))
    codes = gap(feature)
    for c in range(3):
        acc = 0.0
        for i in range(8):
            for j in range(8):
                acc += float(feature[c, i, j])
        assert float(codes[c]) == pytest.approx(acc / 64, abs=1e-5)


def test_compute_mask_strict_inequality_and_tie():
    texture = torch.tensor([1.0, 3.0, 2.0])
    surface = torch.tensor([2.0, 1.0, 2.0])
    mask = compute_mask(surface, texture)
    assert mask.tolist() == [True, False, False]


def test_compute_mask_all_ties_give_texture():
    code = torch.tensor([0.5, 1.5, -2.0])
    assert compute_mask(code, code.clone()).tolist() == [False, False, False]


def test_compute_mask_length_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        compute_mask(torch.zeros(3), torch.zeros(4))


def test_compute_mask_matches_scalar_loop():
    rng = np.random.default_rng(1)
    surface = torch.from_numpy(rng.standard_normal(512))
    texture = torch.from_numpy(rng.standard_normal(512))
    mask = compute_mask(surface, texture)
    for i in range(512):
        assert bool(mask[i]) == (float(surface[i]) > float(texture[i]))


def test_compute_mask_permutation_equivariance():
    rng = np.random.default_rng(2)
    surface = torch.from_numpy(rng.standard_normal(64))
    texture = torch.from_numpy(rng.standard_normal(64))
    perm = torch.from_numpy(rng.permutation(64))
    direct = compute_mask(surface[perm], texture[perm])
    permuted = compute_mask(surface, texture)[perm]
    assert torch.equal(direct, permuted)


def test_mask_scale_sensitivity_is_real():
    # scaling one code can flip bits; documented behavior, not a bug
    surface = torch.tensor([0.5, 2.0])
    texture = torch.tensor([1.0, 1.0])
    before = compute_mask(surface, texture)
    after = compute_mask(3.0 * surface, texture)
    assert before.tolist() == [False, True]
    assert after.tolist() == [True, True]


def test_split_identity_and_complement():
    feature = torch.randn(6, 4, 4, generator=torch.Generator().manual_seed(0))
    ones = torch.ones(6, dtype=torch.bool)
    surface, texture = split(feature, ones)
    assert torch.equal(surface, feature) and torch.count_nonzero(texture) == 0
    surface, texture = split(feature, ~ones)
    assert torch.count_nonzero(surface) == 0 and torch.equal(texture, feature)


def test_split_partition_bit_exact():
    g = torch.Generator().manual_seed(3)
    for _ in range(20):
        feature = torch.randn(16, 5, 7, generator=g)
        mask = torch.randint(0, 2, (16,), generator=g, dtype=torch.bool)
        surface, texture = split(feature, mask)
        assert torch.equal(surface + texture, feature)
        # each channel lives in exactly one part
        assert torch.count_nonzero(surface[~mask]) == 0
        assert torch.count_nonzero(texture[mask]) == 0


def test_split_length_mismatch():
    with pytest.raises(ValueError):
        split(torch.zeros(4, 3, 3), torch.ones(5, dtype=torch.bool))


def test_code_rate_stats_counting():
    mask = torch.zeros(512, dtype=torch.bool)
    mask[:200] = True
    stats = code_rate_stats(mask)
    assert (stats.surface, stats.texture, stats.balance) == (200, 312, 56.0)


def test_code_rate_stats_degenerate():
    stats = code_rate_stats(torch.zeros(512, dtype=torch.bool))
    assert (stats.surface, stats.texture, stats.balance) == (0, 512, 256.0)


def test_code_rate_stats_batch_mean_matches_recount():
    g = torch.Generator().manual_seed(4)
    masks = [torch.randint(0, 2, (64,), generator=g, dtype=torch.bool) for _ in range(10)]
    mean_balance = np.mean([code_rate_stats(m).balance for m in masks])
    oracle = np.mean([abs(sum(int(b) for b in m) - 32.0) for m in masks])
    assert mean_balance == pytest.approx(oracle)


def test_fixed_grouping_blocks():
    masks = fixed_grouping(8, 4)
    assert len(masks) == 2
    assert masks[0].tolist() == [True] * 4 + [False] * 4
    assert masks[1].tolist() == [False] * 4 + [True] * 4


def test_fixed_grouping_full_and_channelwise():
    assert fixed_grouping(8, 8)[0].all()
    singles = fixed_grouping(8, 1)
    assert len(singles) == 8
    assert all(int(m.sum()) == 1 for m in singles)


def test_fixed_grouping_truncated_last_block_covers_once():
    masks = fixed_grouping(10, 4)
    assert [int(m.sum()) for m in masks] == [4, 4, 2]
    total = torch.stack(masks).sum(dim=0)
    assert torch.equal(total, torch.ones(10, dtype=torch.long))


def test_fixed_grouping_bad_size():
    with pytest.raises(ValueError):
        fixed_grouping(8, 0)


def test_mask_from_images_shapes(encoder):
    rng = np.random.default_rng(5)
    surface = rng.random((48, 48, 3), dtype=np.float32)
    texture = rng.random((48, 48, 3), dtype=np.float32)
    mask = mask_from_images(encoder, surface, texture)
    assert mask.shape == (512,)
    assert mask.dtype == torch.bool
