"""Learned illumination/reflectance decomposition.

Forward-only wrapper around the published two-output decomposition network:
a 9x9 stem conv over the image concatenated with its channel-wise max, five
3x3 conv+ReLU layers, and a 4-channel head split into reflectance (3) and
illumination (1), both through a sigmoid. Weights are ingested from a tensor
dictionary; training this network is out of scope here.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .decompose import DEFAULT_FLOOR, DecompositionPair
from .imaging import validate_image
from .weights import load_tensors, normalize_decomnet_state


class DecompositionNet(nn.Module):
    def __init__(self, state: dict[str, torch.Tensor]):
        super().__init__()
        state = normalize_decomnet_state(state)
        self.stem = nn.Conv2d(4, 64, 9, padding=4, padding_mode="replicate")
        body = []
        for _ in range(5):
            body += [nn.Conv2d(64, 64, 3, padding=1, padding_mode="replicate"), nn.ReLU()]
        self.body = nn.Sequential(*body)
        self.head = nn.Conv2d(64, 4, 3, padding=1, padding_mode="replicate")
        self.load_state_dict(state)
        self.requires_grad_(False)
        self.eval()

    @classmethod
    def from_file(cls, path) -> "DecompositionNet":
        return cls(load_tensors(path, "decomposition net"))

    def forward(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        peak = image.max(dim=1, keepdim=True).values
        x = self.stem(torch.cat([peak, image], dim=1))
        x = self.head(self.body(x))
        reflectance = torch.sigmoid(x[:, 0:3])
        illumination = torch.sigmoid(x[:, 3:4])
        return reflectance, illumination


def decompose_learned(img: np.ndarray, weights_path) -> DecompositionPair:
    """Decompose via a forward pass of the pretrained network.

    The reconstruction R * L only approximates the input to the network's
    own fidelity, unlike the exact classical decomposition.
    """
    validate_image(img)
    net = DecompositionNet.from_file(weights_path)
    t = torch.from_numpy(img).permute(2, 0, 1)[None].float()
    if t.shape[1] == 1:
        t = t.expand(-1, 3, -1, -1)
    with torch.inference_mode():
        reflectance, illumination = net(t)
    channels = img.shape[2]
    refl = reflectance[0, :channels].permute(1, 2, 0).numpy().astype(np.float32)
    illum = illumination[0, 0].numpy().astype(np.float32)
    illum = np.repeat(illum[:, :, None], channels, axis=2)
    return DecompositionPair(
        illumination=np.ascontiguousarray(illum),
        reflectance=np.ascontiguousarray(refl),
        floor=DEFAULT_FLOOR,
    )
