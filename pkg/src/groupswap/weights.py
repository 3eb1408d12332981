"""Weight-file handling.

All networks load from serialized tensor-dictionary files (name -> tensor)
written with ``torch.save``. Canonical key names are documented per network
below; the loaders also accept the common third-party namings (torchvision
VGG-19 ``features.N.*`` keys, and the usual ``net1_*`` decomposition-net port
keys) and translate them.

For environments without pretrained files, ``synthesize_*`` builds
deterministic seeded weights good enough for contract and property testing:

    python -m groupswap.weights --kind encoder --seed 0 --out encoder.wt
"""

from __future__ import annotations

import math
import os

import torch

from .errors import ConfigurationError

# name -> (in_channels, out_channels); pooling happens after conv1_2,
# conv2_2 and conv3_4.
ENCODER_CONVS = (
    ("conv1_1", 3, 64),
    ("conv1_2", 64, 64),
    ("conv2_1", 64, 128),
    ("conv2_2", 128, 128),
    ("conv3_1", 128, 256),
    ("conv3_2", 256, 256),
    ("conv3_3", 256, 256),
    ("conv3_4", 256, 256),
    ("conv4_1", 256, 512),
)

# torchvision vgg19().features indices of the convs above.
_TORCHVISION_INDICES = (0, 2, 5, 7, 10, 12, 14, 16, 19)

# Decoder mirror; the two skip stages take concatenated inputs.
DECODER_CONVS = (
    ("dec4_1", 512, 256),
    ("dec3_4", 256, 256),
    ("dec3_3", 256, 256),
    ("dec3_2", 256, 256),
    ("dec3_1", 256, 128),
    ("dec2_2", 128 + 128, 128),  # skip: conv2_1 activations
    ("dec2_1", 128, 64),
    ("dec1_2", 64 + 64, 64),  # skip: conv1_1 activations
    ("dec1_1", 64, 3),
)

# Decomposition net: stem 9x9 conv, five 3x3 conv+relu body layers, 4-channel
# head split into reflectance (3) and illumination (1).
DECOMNET_KEYS = ("stem", "body.0", "body.2", "body.4", "body.6", "body.8", "head")
_DECOMNET_PORT_KEYS = (
    "net1_conv0",
    "net1_convs.0",
    "net1_convs.2",
    "net1_convs.4",
    "net1_convs.6",
    "net1_convs.8",
    "net1_recon",
)


def save_tensors(path: str | os.PathLike, tensors: dict[str, torch.Tensor]) -> None:
    torch.save({k: v.detach().cpu() for k, v in tensors.items()}, path)


def load_tensors(path: str | os.PathLike, what: str) -> dict[str, torch.Tensor]:
    if not os.path.exists(path):
        raise ConfigurationError(
            f"{what} weight file not found: {path}. Point the matching option at a "
            f"valid tensor-dictionary file, or generate deterministic test weights "
            f"with `python -m groupswap.weights --kind <kind> --out {path}`."
        )
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # noqa: BLE001 - surface as configuration problem
        raise ConfigurationError(f"{what} weight file {path} is unreadable: {exc}") from exc
    if not isinstance(state, dict):
        raise ConfigurationError(f"{what} weight file {path} is not a tensor dictionary")
    return {k: v.float() for k, v in state.items()}


def _translate(state: dict, pairs: list[tuple[str, str]], what: str, path) -> dict:
    out = {}
    for src, dst in pairs:
        for suffix in ("weight", "bias"):
            key = f"{src}.{suffix}"
            if key not in state:
                raise ConfigurationError(
                    f"{what} weight file {path} is missing key '{key}'"
                )
            out[f"{dst}.{suffix}"] = state[key]
    return out


def normalize_encoder_state(state: dict, path="<dict>") -> dict[str, torch.Tensor]:
    """Map an encoder state dict to canonical conv names and check shapes."""
    if "conv1_1.weight" in state:
        pairs = [(name, name) for name, _, _ in ENCODER_CONVS]
    elif "features.0.weight" in state:
        pairs = [
            (f"features.{idx}", name)
            for idx, (name, _, _) in zip(_TORCHVISION_INDICES, ENCODER_CONVS)
        ]
    else:
        raise ConfigurationError(
            f"encoder weight file {path} has unrecognized keys; expected canonical "
            f"'conv1_1.weight' style names or torchvision 'features.N.weight' names"
        )
    out = _translate(state, pairs, "encoder", path)
    for name, cin, cout in ENCODER_CONVS:
        shape = tuple(out[f"{name}.weight"].shape)
        if shape != (cout, cin, 3, 3):
            raise ConfigurationError(
                f"encoder weight {name}.weight has shape {shape}, expected {(cout, cin, 3, 3)}"
            )
    return out


def normalize_decoder_state(state: dict, path="<dict>") -> dict[str, torch.Tensor]:
    if "dec4_1.weight" not in state:
        raise ConfigurationError(
            f"decoder weight file {path} has unrecognized keys; expected 'dec4_1.weight' style names"
        )
    out = _translate(state, [(n, n) for n, _, _ in DECODER_CONVS], "decoder", path)
    for name, cin, cout in DECODER_CONVS:
        shape = tuple(out[f"{name}.weight"].shape)
        if shape != (cout, cin, 3, 3):
            raise ConfigurationError(
                f"decoder weight {name}.weight has shape {shape}, expected {(cout, cin, 3, 3)}"
            )
    return out


def normalize_decomnet_state(state: dict, path="<dict>") -> dict[str, torch.Tensor]:
    if "stem.weight" in state:
        pairs = [(k, k) for k in DECOMNET_KEYS]
    elif "net1_conv0.weight" in state:
        pairs = list(zip(_DECOMNET_PORT_KEYS, DECOMNET_KEYS))
    else:
        raise ConfigurationError(
            f"decomposition-net weight file {path} has unrecognized keys; expected "
            f"'stem/body.N/head' or 'net1_conv0/net1_convs.N/net1_recon' names"
        )
    return _translate(state, pairs, "decomposition net", path)


def _conv_init(
    g: torch.Generator, cout: int, cin: int, k: int
) -> tuple[torch.Tensor, torch.Tensor]:
    # He-style init so activations keep a sane scale through stacked ReLUs.
    std = math.sqrt(2.0 / (cin * k * k))
    w = torch.randn((cout, cin, k, k), generator=g) * std
    return w, torch.zeros(cout)


def _calibration_battery(count: int = 6, size: int = 128) -> torch.Tensor:
    # Procedural multi-octave value noise; fixed seeds, independent of any
    # shipped corpus.
    import numpy as np

    from .imaging import resize_to

    images = []
    for s in range(count):
        rng = np.random.default_rng(9000 + s)
        img = np.zeros((size, size, 3), dtype=np.float32)
        for cells, weight in ((4, 0.5), (16, 0.3), (64, 0.2)):
            img += weight * resize_to(rng.random((cells, cells, 3), dtype=np.float32), size, size)
        images.append(np.clip(img, 0.0, 1.0))
    return torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2)


def synthesize_encoder(
    seed: int = 0, suppressive_fraction: float = 0.4, threshold_quantile: float = 0.5
) -> dict[str, torch.Tensor]:
    """Deterministic encoder weights for environments without a pretrained file.

    Convolutions are He-initialized random filters. A fraction of the final
    layer's channels is made suppressive (all-negative filters with a
    positive bias calibrated on a procedural-noise battery), emulating the
    mixed enhancing/suppressive selectivity of trained encoders; with purely
    random filters every pooled channel code grows monotonically with input
    texture energy, which no trained network exhibits.
    """
    import torch.nn.functional as F

    g = torch.Generator().manual_seed(seed)
    x = _calibration_battery()
    mean = torch.tensor((0.485, 0.456, 0.406)).view(1, 3, 1, 1)
    std = torch.tensor((0.229, 0.224, 0.225)).view(1, 3, 1, 1)
    x = (x - mean) / std
    state = {}
    final = ENCODER_CONVS[-1][0]
    for name, cin, cout in ENCODER_CONVS:
        w, b = _conv_init(g, cout, cin, 3)
        if name == final and suppressive_fraction > 0:
            k = int(cout * suppressive_fraction)
            suppressed = torch.randperm(cout, generator=g)[:k]
            w[suppressed] = -w[suppressed].abs()
            pre = F.conv2d(x, w, padding=1)
            flat = pre.permute(1, 0, 2, 3).reshape(cout, -1)
            b[suppressed] = -torch.quantile(flat[suppressed], threshold_quantile, dim=1)
        state[f"{name}.weight"] = w
        state[f"{name}.bias"] = b
        x = F.relu(F.conv2d(x, w, b, padding=1))
        if name in ("conv1_2", "conv2_2", "conv3_4"):
            x = F.max_pool2d(x, 2, 2, ceil_mode=True)
    return state


def synthesize_decoder(seed: int = 0) -> dict[str, torch.Tensor]:
    g = torch.Generator().manual_seed(seed)
    state = {}
    for name, cin, cout in DECODER_CONVS:
        w, b = _conv_init(g, cout, cin, 3)
        state[f"{name}.weight"] = w
        state[f"{name}.bias"] = b
    return state


def synthesize_decomnet(seed: int = 0) -> dict[str, torch.Tensor]:
    g = torch.Generator().manual_seed(seed)
    shapes = [(64, 4, 9)] + [(64, 64, 3)] * 5 + [(4, 64, 3)]
    state = {}
    for key, (cout, cin, k) in zip(DECOMNET_KEYS, shapes):
        w, b = _conv_init(g, cout, cin, k)
        state[f"{key}.weight"] = w
        state[f"{key}.bias"] = b
    return state


_SYNTHESIZERS = {
    "encoder": synthesize_encoder,
    "decoder": synthesize_decoder,
    "decomnet": synthesize_decomnet,
}


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(
        prog="python -m groupswap.weights",
        description="Write a deterministic seeded weight file for smoke testing.",
    )
    parser.add_argument("--kind", choices=sorted(_SYNTHESIZERS), required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    save_tensors(args.out, _SYNTHESIZERS[args.kind](args.seed))
    print(f"wrote {args.kind} weights (seed {args.seed}) to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
