"""Channel-grouped patch-swap style transfer.

The pipeline decomposes a content image into illumination (surface) and
reflectance (texture), groups encoder channels by comparing the pooled
responses of the two, swaps each channel group's feature patches against the
matching group of a multi-scale style patch bank, decodes the swapped
features, and optionally repairs dark texture regions with a weighted
surface contribution.
"""

from .codec import LossWeights, VggDecoder, VggEncoder, compute_loss
from .config import StylizeConfig
from .decompose import (
    DecompositionPair,
    FilterSpec,
    apply_filter,
    decompose_classical,
)
from .decomnet import decompose_learned
from .errors import ConfigurationError, StageError
from .fusion import FusionConfig, activate_weights, complementary_weights, fuse
from .grouping import code_rate_stats, compute_mask, fixed_grouping, gap, split
from .imaging import load_image, resize, save_image, to_luminance
from .pipeline import StylizeResult, run_stylize, stylize_file
from .swap import (
    PatchBank,
    SwapResult,
    build_multiscale_bank,
    center_channels,
    extract_patches,
    swap_accelerated,
    swap_bruteforce,
    upcc_score,
)
from .training import TrainConfig, train_decoder

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DecompositionPair",
    "FilterSpec",
    "FusionConfig",
    "LossWeights",
    "PatchBank",
    "StageError",
    "StylizeConfig",
    "StylizeResult",
    "SwapResult",
    "TrainConfig",
    "VggDecoder",
    "VggEncoder",
    "activate_weights",
    "apply_filter",
    "build_multiscale_bank",
    "center_channels",
    "code_rate_stats",
    "complementary_weights",
    "compute_loss",
    "compute_mask",
    "decompose_classical",
    "decompose_learned",
    "extract_patches",
    "fixed_grouping",
    "fuse",
    "gap",
    "load_image",
    "resize",
    "run_stylize",
    "save_image",
    "split",
    "stylize_file",
    "swap_accelerated",
    "swap_bruteforce",
    "to_luminance",
    "train_decoder",
    "upcc_score",
]
