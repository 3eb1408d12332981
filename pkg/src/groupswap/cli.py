"""Command-line interface.

Subcommands: ``stylize`` (full pipeline), ``train`` (decoder training),
``ablate`` (filters/grouping/fusion studies), ``bench`` (stage timings).
Values come from defaults, then an optional ``key = value`` config file,
then explicit flags. Exit codes: 0 success, 1 stage failure, 2 bad
configuration or usage.
"""

from __future__ import annotations

import argparse
import sys

from .codec import LossWeights, VggDecoder, VggEncoder
from .config import parse_config_file, stylize_config_from_values
from .errors import ConfigurationError, StageError
from .harness import ablate_filters, ablate_fusion, ablate_grouping, run_bench
from .pipeline import stylize_file
from .training import TrainConfig, train_decoder


def _add_weight_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--encoder-weights", help="encoder tensor-dictionary file")
    parser.add_argument("--decoder-weights", help="decoder tensor-dictionary file")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupswap")
    sub = parser.add_subparsers(dest="command", required=True)

    st = sub.add_parser("stylize", help="stylize a content image with a style image")
    _add_weight_flags(st)
    st.add_argument("--content")
    st.add_argument("--style")
    st.add_argument("--out")
    st.add_argument("--fuse", action="store_true", default=None,
                    help="repair dark texture areas with the weighted surface decode")
    st.add_argument("--fusion-mode", choices=("verbatim", "shifted"))
    st.add_argument("--scales", help="comma list of style scales, e.g. 1.0,0.667")
    st.add_argument("--patch", type=int)
    st.add_argument("--decomposer", choices=("classical", "learned"))
    st.add_argument("--decom-weights")
    st.add_argument("--fallback-classical", action="store_true", default=None)
    st.add_argument("--emit-intermediates", action="store_true", default=None)
    st.add_argument("--seed", type=int)
    st.add_argument("--no-resize", action="store_true", default=None)
    st.add_argument("--max-side", type=int)
    st.add_argument("--independent-style-mask", action="store_true", default=None)
    st.add_argument("--delta", type=float)
    st.add_argument("--epsilon", type=float)
    st.add_argument("--tau", type=float)

    tr = sub.add_parser("train", help="train the decoder")
    tr.add_argument("--config", required=True)
    tr.add_argument("--iterations", type=int)
    tr.add_argument("--subset", type=int)

    ab = sub.add_parser("ablate", help="run an ablation study over a corpus")
    _add_weight_flags(ab)
    ab.add_argument("--kind", choices=("filters", "grouping", "fusion"), required=True)
    ab.add_argument("--corpus", required=True)
    ab.add_argument("--out", required=True)
    ab.add_argument("--scales")
    ab.add_argument("--patch", type=int)
    ab.add_argument("--group-size", type=int, default=64)
    ab.add_argument("--relaxation", type=float)

    be = sub.add_parser("bench", help="time the pipeline stages")
    _add_weight_flags(be)
    be.add_argument("--sizes", default="512,1024", help="comma list of square sizes")
    be.add_argument("--runs", type=int, default=5)
    be.add_argument("--out", help="optional CSV path for the timing table")
    return parser


_STYLIZE_FLAGS = (
    ("content", "content"),
    ("style", "style"),
    ("out", "out"),
    ("encoder_weights", "encoder_weights"),
    ("decoder_weights", "decoder_weights"),
    ("decomposer", "decomposer"),
    ("decom_weights", "decom_weights"),
    ("fallback_classical", "fallback_classical"),
    ("scales", "scales"),
    ("patch", "patch"),
    ("fuse", "fuse"),
    ("fusion_mode", "fusion_mode"),
    ("emit_intermediates", "emit_intermediates"),
    ("seed", "seed"),
    ("no_resize", "no_resize"),
    ("max_side", "max_side"),
    ("independent_style_mask", "independent_style_mask"),
    ("delta", "delta"),
    ("epsilon", "epsilon"),
    ("tau", "tau"),
)


def _merge_values(args: argparse.Namespace, flags) -> dict[str, str]:
    values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    for attr, key in flags:
        cli = getattr(args, attr, None)
        if cli is not None:
            values[key] = str(cli)
    return values


def _cmd_stylize(args) -> int:
    cfg = stylize_config_from_values(_merge_values(args, _STYLIZE_FLAGS))
    result = stylize_file(cfg)
    timings = result.timings
    print(
        f"wrote {cfg.out} "
        f"(retinex {timings['retinex']:.3f}s, cgps {timings['cgps']:.3f}s, "
        f"total {timings['total']:.3f}s)"
    )
    return 0


def _cmd_train(args) -> int:
    values = parse_config_file(args.config)
    known = {
        "photos_dir": str, "artworks_dir": str, "out_dir": str,
        "batch": int, "lr": float, "epochs": int, "crop": int,
        "iterations": int, "subset": int, "seed": int,
        "encoder_weights": str, "tv_weight": float,
    }
    kwargs = {}
    encoder_path = None
    tv_weight = None
    for key, value in values.items():
        if key not in known:
            raise ConfigurationError(f"unknown train config key '{key}'")
        if key == "encoder_weights":
            encoder_path = value
        elif key == "tv_weight":
            tv_weight = float(value)
        else:
            kwargs[key] = known[key](value)
    if args.iterations is not None:
        kwargs["iterations"] = args.iterations
    if args.subset is not None:
        kwargs["subset"] = args.subset
    for required in ("photos_dir", "artworks_dir", "out_dir"):
        if required not in kwargs:
            raise ConfigurationError(f"train config is missing '{required}'")
    if encoder_path is None:
        raise ConfigurationError("train config is missing 'encoder_weights'")
    try:
        config = TrainConfig(**kwargs)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    encoder = VggEncoder.from_file(encoder_path)
    weights = LossWeights() if tv_weight is None else LossWeights(tv=tv_weight)
    _, trace = train_decoder(encoder, config, weights)
    print(f"trained {len(trace)} iterations; final total loss {trace[-1]['total']:.4f}")
    print(f"checkpoints and loss trace in {config.out_dir}")
    return 0


def _cmd_ablate(args) -> int:
    values = _merge_values(args, (
        ("encoder_weights", "encoder_weights"),
        ("decoder_weights", "decoder_weights"),
        ("scales", "scales"),
        ("patch", "patch"),
    ))
    cfg = stylize_config_from_values(values)
    if not cfg.encoder_weights:
        raise ConfigurationError("ablate needs encoder_weights (flag or config file)")
    encoder = VggEncoder.from_file(cfg.encoder_weights)
    if args.kind == "filters":
        ablate_filters(encoder, args.corpus, args.out, floor=cfg.floor)
    else:
        if not cfg.decoder_weights:
            raise ConfigurationError(f"ablate --kind {args.kind} needs decoder_weights")
        decoder = VggDecoder.from_file(cfg.decoder_weights)
        if args.kind == "grouping":
            ablate_grouping(encoder, decoder, args.corpus, args.out, cfg,
                            group_size=args.group_size)
        else:
            ablate_fusion(encoder, decoder, args.corpus, args.out, cfg,
                          relaxation=args.relaxation)
    print(f"ablation '{args.kind}' reports written to {args.out}")
    return 0


def _cmd_bench(args) -> int:
    values = _merge_values(args, (
        ("encoder_weights", "encoder_weights"),
        ("decoder_weights", "decoder_weights"),
    ))
    cfg = stylize_config_from_values(values)
    if not cfg.encoder_weights or not cfg.decoder_weights:
        raise ConfigurationError("bench needs encoder_weights and decoder_weights")
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad sizes list '{args.sizes}': {exc}") from exc
    if not sizes:
        raise ConfigurationError("sizes list is empty")
    run_bench(cfg, sizes, runs=args.runs, out_csv=args.out)
    return 0


_COMMANDS = {
    "stylize": _cmd_stylize,
    "train": _cmd_train,
    "ablate": _cmd_ablate,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
