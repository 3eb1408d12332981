import csv
import shutil

import numpy as np
import pytest
import torch

from groupswap.cli import main
from groupswap.config import (
    StylizeConfig,
    parse_config_file,
    parse_scales,
    stylize_config_from_values,
)
from groupswap.errors import ConfigurationError
from groupswap.harness import ablate_filters, ablate_fusion, ablate_grouping, run_bench
from groupswap.imaging import load_image
from groupswap.pipeline import prepare_input, run_stylize

from conftest import CORPUS_DIR


def small_cfg(weight_files, out, **overrides) -> StylizeConfig:
    cfg = StylizeConfig(
        content=str(CORPUS_DIR / "img00.png"),
        style=str(CORPUS_DIR / "img01.png"),
        out=str(out),
        encoder_weights=weight_files["encoder"],
        decoder_weights=weight_files["decoder"],
        scales=(1.0,),
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def cli_flags(weight_files, content, style, out, *extra):
    return [
        "stylize",
        "--content", str(content),
        "--style", str(style),
        "--out", str(out),
        "--encoder-weights", weight_files["encoder"],
        "--decoder-weights", weight_files["decoder"],
        "--scales", "1.0",
        *extra,
    ]


def test_cli_stylize_smoke(weight_files, tmp_path, capsys):
    out = tmp_path / "styled.png"
    code = main(cli_flags(weight_files, CORPUS_DIR / "img00.png", CORPUS_DIR / "img01.png", out))
    assert code == 0
    img = load_image(out)
    assert np.isfinite(img).all()
    assert 0.0 <= img.min() and img.max() <= 1.0
    assert "cgps" in capsys.readouterr().out


def test_cli_emit_intermediates(weight_files, tmp_path):
    out = tmp_path / "styled.png"
    code = main(
        cli_flags(
            weight_files, CORPUS_DIR / "img02.png", CORPUS_DIR / "img01.png", out,
            "--emit-intermediates",
        )
    )
    assert code == 0
    for suffix in ("illumination", "reflectance", "surface", "texture"):
        side = tmp_path / f"styled_{suffix}.png"
        img = load_image(side)
        assert np.isfinite(img).all()


def test_cli_unreadable_content_fails_with_stage(weight_files, tmp_path, capsys):
    out = tmp_path / "x.png"
    code = main(cli_flags(weight_files, tmp_path / "missing.png", CORPUS_DIR / "img01.png", out))
    assert code == 1
    err = capsys.readouterr().err
    assert "stage 'load'" in err
    assert not out.exists()


def test_cli_missing_weights_is_config_error(tmp_path, capsys):
    code = main([
        "stylize",
        "--content", str(CORPUS_DIR / "img00.png"),
        "--style", str(CORPUS_DIR / "img01.png"),
        "--out", str(tmp_path / "y.png"),
    ])
    assert code == 2
    assert "encoder_weights" in capsys.readouterr().err


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# experiment record\n"
        "content = a.png\n"
        "style = b.png\n"
        "scales = 1.0, 0.667\n"
        "fuse = true\n"
        "patch = 3\n"
        "delta = 12.5\n"
    )
    values = parse_config_file(path)
    cfg = stylize_config_from_values(values)
    assert cfg.content == "a.png"
    assert cfg.scales == (1.0, 0.667)
    assert cfg.fuse is True
    assert cfg.fusion.delta == 12.5


def test_config_file_bad_lines(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("just words\n")
    with pytest.raises(ConfigurationError, match="key = value"):
        parse_config_file(bad)
    with pytest.raises(ConfigurationError, match="unknown config key"):
        stylize_config_from_values({"nope": "1"})
    with pytest.raises(ConfigurationError):
        parse_scales("0,-1")


def test_cli_flags_override_config_file(weight_files, tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(
        f"content = {CORPUS_DIR / 'img00.png'}\n"
        f"style = {CORPUS_DIR / 'img01.png'}\n"
        f"out = {tmp_path / 'from_file.png'}\n"
        f"encoder_weights = {weight_files['encoder']}\n"
        f"decoder_weights = {weight_files['decoder']}\n"
        "scales = 1.0\n"
    )
    out_flag = tmp_path / "from_flag.png"
    code = main(["stylize", "--config", str(cfg_file), "--out", str(out_flag)])
    assert code == 0
    assert out_flag.exists()
    assert not (tmp_path / "from_file.png").exists()


def test_fusion_off_output_is_texture_decode(weight_files, tmp_path, encoder, decoder):
    cfg = small_cfg(weight_files, tmp_path / "o.png")
    result = run_stylize(cfg, encoder=encoder, decoder=decoder)
    assert np.array_equal(result.image, result.texture_image)


def test_fusion_changes_output(weight_files, tmp_path, encoder, decoder):
    base = run_stylize(small_cfg(weight_files, tmp_path / "a.png"), encoder=encoder, decoder=decoder)
    fused = run_stylize(
        small_cfg(weight_files, tmp_path / "b.png", fuse=True), encoder=encoder, decoder=decoder
    )
    assert not np.array_equal(base.image, fused.image)
    # fusion only adds weighted surface: never darker than the texture decode
    assert np.all(fused.image >= base.image - 1e-6)


def test_mask_partitions_every_channel(weight_files, tmp_path, encoder, decoder):
    cfg = small_cfg(weight_files, tmp_path / "m.png")
    result = run_stylize(cfg, encoder=encoder, decoder=decoder)
    mask = result.mask
    assert mask.shape == (512,)
    surface_zero = result.surface_swap  # compacted group results
    assert result.surface_bank.channels == int(mask.sum())
    assert result.texture_bank.channels == 512 - int(mask.sum())
    assert surface_zero.assignment.shape == result.texture_swap.assignment.shape


def test_independent_style_mask_runs(weight_files, tmp_path, encoder, decoder):
    cfg = small_cfg(weight_files, tmp_path / "i.png", independent_style_mask=True)
    result = run_stylize(cfg, encoder=encoder, decoder=decoder)
    assert result.image.shape == load_image(cfg.content).shape
    # full-width path keeps 512-channel banks
    assert result.surface_bank.channels == 512


def test_prepare_input_snaps_to_multiples_of_eight():
    rng = np.random.default_rng(0)
    cfg = StylizeConfig(max_side=1024)
    img = rng.random((143, 99, 3), dtype=np.float32)
    out = prepare_input(img, cfg)
    assert out.shape[0] % 8 == 0 and out.shape[1] % 8 == 0
    big = rng.random((60, 2100, 3), dtype=np.float32)
    bounded = prepare_input(big, cfg)
    assert max(bounded.shape[:2]) <= 1024
    assert bounded.shape[0] >= 32


def test_learned_decomposer_fallback_flag(weight_files, tmp_path, encoder, decoder):
    cfg = small_cfg(
        weight_files, tmp_path / "f.png",
        decomposer="learned", decom_weights=str(tmp_path / "absent.wt"),
    )
    from groupswap.errors import StageError

    with pytest.raises(StageError, match="decompose"):
        run_stylize(cfg, encoder=encoder, decoder=decoder)
    cfg.fallback_classical = True
    result = run_stylize(cfg, encoder=encoder, decoder=decoder)
    assert result.image is not None


def test_ablate_filters_outputs(weight_files, tmp_path, encoder):
    corpus = tmp_path / "mini"
    corpus.mkdir()
    for name in ("img00.png", "img01.png", "img03.png"):
        shutil.copy(CORPUS_DIR / name, corpus / name)
    out = tmp_path / "filters"
    summary = ablate_filters(encoder, corpus, out)
    with open(out / "code_rates.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 4  # images x methods
    for row in rows:
        assert int(row["surface"]) + int(row["texture"]) == 512
    with open(out / "balance_table.csv") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["image", "retinex", "gaussian", "bilateral", "guided"]
    assert len(table) == 4  # header + 3 images
    assert set(summary["mean_balance"]) == {"retinex", "gaussian", "bilateral", "guided"}


def test_ablate_grouping_outputs(weight_files, tmp_path, encoder, decoder):
    corpus = tmp_path / "mini"
    corpus.mkdir()
    shutil.copy(CORPUS_DIR / "img01.png", corpus / "a_style.png")
    shutil.copy(CORPUS_DIR / "img00.png", corpus / "b_content.png")
    out = tmp_path / "grouping"
    cfg = small_cfg(weight_files, tmp_path / "unused.png")
    written = ablate_grouping(encoder, decoder, corpus, out, cfg, group_size=128)
    names = {p.name for p in written}
    assert names == {
        "b_content_mask.png",
        "b_content_fixed.png",
        "b_content_full.png",
        "b_content_channelwise.png",
    }
    for path in written:
        img = load_image(path)
        assert np.isfinite(img).all()
    assert (out / "b_content_assignments_surface.csv").exists()
    assert (out / "b_content_assignments_texture.csv").exists()


def test_ablate_fusion_outputs(weight_files, tmp_path, encoder, decoder):
    corpus = tmp_path / "mini"
    corpus.mkdir()
    shutil.copy(CORPUS_DIR / "img01.png", corpus / "a_style.png")
    shutil.copy(CORPUS_DIR / "img02.png", corpus / "b_content.png")
    out = tmp_path / "fusion"
    cfg = small_cfg(weight_files, tmp_path / "unused.png")
    written = ablate_fusion(encoder, decoder, corpus, out, cfg, relaxation=0.4)
    names = {p.name for p in written}
    assert names == {
        "b_content_fusion_off.png",
        "b_content_fusion_verbatim.png",
        "b_content_fusion_shifted.png",
        "b_content_fusion_relaxation_0.4.png",
    }


def test_ablate_needs_enough_images(weight_files, tmp_path, encoder, decoder):
    corpus = tmp_path / "single"
    corpus.mkdir()
    shutil.copy(CORPUS_DIR / "img00.png", corpus / "only.png")
    cfg = small_cfg(weight_files, tmp_path / "unused.png")
    with pytest.raises(ConfigurationError, match="style image plus"):
        ablate_grouping(encoder, decoder, corpus, tmp_path / "x", cfg)
    with pytest.raises(ConfigurationError, match="no images"):
        ablate_filters(encoder, tmp_path / "nothere", tmp_path / "y")


def test_bench_report_structure(weight_files, tmp_path, encoder, decoder, capsys):
    cfg = StylizeConfig(
        encoder_weights=weight_files["encoder"],
        decoder_weights=weight_files["decoder"],
        scales=(1.0,),
        content="unused",
        style="unused",
        out="unused",
    )
    csv_path = tmp_path / "bench.csv"
    report = run_bench(cfg, sizes=[64, 96], runs=2, out_csv=csv_path,
                       encoder=encoder, decoder=decoder)
    assert list(report.rows) == ["retinex", "cgps", "total"]
    for size in (64, 96):
        total = report.rows["total"][size]
        parts = report.rows["retinex"][size] + report.rows["cgps"][size]
        assert total == pytest.approx(parts, rel=0.05)
    with open(csv_path) as fh:
        lines = list(csv.reader(fh))
    assert lines[0] == ["stage", "64", "96"]
    assert [row[0] for row in lines[1:]] == ["retinex", "cgps", "total"]
    out = capsys.readouterr().out
    assert "stage" in out


def test_cli_bench_and_ablate_exit_codes(weight_files, tmp_path, capsys):
    code = main([
        "bench", "--sizes", "64", "--runs", "1",
        "--encoder-weights", weight_files["encoder"],
        "--decoder-weights", weight_files["decoder"],
    ])
    assert code == 0
    code = main(["bench", "--sizes", "nope",
                 "--encoder-weights", weight_files["encoder"],
                 "--decoder-weights", weight_files["decoder"]])
    assert code == 2
    code = main(["ablate", "--kind", "filters", "--corpus", str(tmp_path / "missing"),
                 "--out", str(tmp_path / "o"),
                 "--encoder-weights", weight_files["encoder"]])
    assert code == 2


def test_seeded_runs_bit_identical(weight_files, tmp_path):
    out1, out2 = tmp_path / "s1.png", tmp_path / "s2.png"
    for out in (out1, out2):
        code = main(cli_flags(
            weight_files, CORPUS_DIR / "img03.png", CORPUS_DIR / "img01.png", out,
            "--seed", "11",
        ))
        assert code == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_style_equals_content_still_valid(weight_files, tmp_path, encoder, decoder):
    # swapping against the image's own bank is not an identity (scaled
    # patches can dominate); assert only validity and determinism here
    cfg = small_cfg(weight_files, tmp_path / "self.png",
                    style=str(CORPUS_DIR / "img00.png"))
    a = run_stylize(cfg, encoder=encoder, decoder=decoder)
    b = run_stylize(cfg, encoder=encoder, decoder=decoder)
    assert np.isfinite(a.image).all()
    assert 0.0 <= a.image.min() and a.image.max() <= 1.0
    assert np.array_equal(a.image, b.image)


def test_cli_train_subcommand(weight_files, tmp_path, capsys):
    from groupswap.harness import procedural_image
    from groupswap.imaging import save_image

    for name, base in (("photos", 600), ("artworks", 700)):
        d = tmp_path / name
        d.mkdir()
        for k in range(3):
            save_image(procedural_image(64, base + k), d / f"{k}.png")
    cfg = tmp_path / "train.cfg"
    cfg.write_text(
        f"photos_dir = {tmp_path / 'photos'}\n"
        f"artworks_dir = {tmp_path / 'artworks'}\n"
        f"out_dir = {tmp_path / 'out'}\n"
        f"encoder_weights = {weight_files['encoder']}\n"
        "batch = 2\n"
        "crop = 48\n"
        "seed = 5\n"
    )
    code = main(["train", "--config", str(cfg), "--iterations", "3"])
    assert code == 0
    assert (tmp_path / "out" / "decoder_epoch1.wt").exists()
    assert (tmp_path / "out" / "loss_trace.csv").exists()
    assert "trained 3 iterations" in capsys.readouterr().out


def test_cli_train_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("photos_dir = somewhere\n")
    assert main(["train", "--config", str(cfg)]) == 2
    assert "missing" in capsys.readouterr().err
