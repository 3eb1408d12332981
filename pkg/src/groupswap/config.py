"""Run configuration: dataclass plus a line-oriented ``key = value`` file format.

Config files are diff-able experiment records: one ``key = value`` per line,
``#`` comments, blank lines ignored. CLI flags override file values, which
override the defaults. Documented keys are listed in the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError
from .fusion import FusionConfig

DEFAULT_SCALES = (1.0, 2.0 / 3.0)


def parse_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def parse_bool(value: str, key: str) -> bool:
    lowered = str(value).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"config key '{key}' expects a boolean, got '{value}'")


def parse_scales(value: str) -> tuple[float, ...]:
    try:
        scales = tuple(float(v) for v in str(value).split(",") if v.strip())
    except ValueError as exc:
        raise ConfigurationError(f"bad scales list '{value}': {exc}") from exc
    if not scales or any(s <= 0 for s in scales):
        raise ConfigurationError(f"scales must be a non-empty list of positive reals, got '{value}'")
    return scales


@dataclass
class StylizeConfig:
    content: str = ""
    style: str = ""
    out: str = ""
    encoder_weights: str = ""
    decoder_weights: str = ""
    decomposer: str = "classical"  # classical | learned
    decom_weights: str = ""
    fallback_classical: bool = False  # explicit opt-in when learned weights are unusable
    scales: tuple[float, ...] = DEFAULT_SCALES
    patch: int = 3
    fuse: bool = False
    fusion: FusionConfig = field(default_factory=FusionConfig)
    emit_intermediates: bool = False
    seed: int = 0
    max_side: int = 1024
    no_resize: bool = False
    independent_style_mask: bool = False
    floor: float = 0.01

    def validated(self) -> "StylizeConfig":
        if self.patch < 1:
            raise ConfigurationError(f"patch size must be >= 1, got {self.patch}")
        if not self.scales:
            raise ConfigurationError("scales must be non-empty")
        if self.decomposer not in ("classical", "learned"):
            raise ConfigurationError(f"unknown decomposer '{self.decomposer}'")
        if not self.encoder_weights:
            raise ConfigurationError(
                "encoder_weights is required (see `python -m groupswap.weights` to "
                "generate deterministic test weights)"
            )
        if not self.decoder_weights:
            raise ConfigurationError("decoder_weights is required")
        return self


_STYLIZE_KEYS = {f.name for f in fields(StylizeConfig)} - {"fusion"}
_FUSION_KEYS = {"delta", "epsilon", "tau", "fusion_mode"}


def stylize_config_from_values(values: dict[str, str]) -> StylizeConfig:
    """Build a StylizeConfig from string key/value pairs (config file or CLI)."""
    cfg = StylizeConfig()
    fusion = {"delta": cfg.fusion.delta, "epsilon": cfg.fusion.epsilon,
              "tau": cfg.fusion.tau, "mode": cfg.fusion.mode}
    for key, value in values.items():
        if key in ("content", "style", "out", "encoder_weights", "decoder_weights",
                   "decomposer", "decom_weights"):
            setattr(cfg, key, str(value))
        elif key in ("fuse", "emit_intermediates", "no_resize", "independent_style_mask",
                     "fallback_classical"):
            setattr(cfg, key, parse_bool(value, key))
        elif key in ("patch", "seed", "max_side"):
            try:
                setattr(cfg, key, int(value))
            except ValueError as exc:
                raise ConfigurationError(f"config key '{key}' expects an integer: {exc}") from exc
        elif key == "floor":
            cfg.floor = float(value)
        elif key == "scales":
            cfg.scales = parse_scales(value)
        elif key in _FUSION_KEYS:
            if key == "fusion_mode":
                fusion["mode"] = str(value)
            else:
                fusion[key] = float(value)
        else:
            raise ConfigurationError(f"unknown config key '{key}'")
    try:
        cfg.fusion = FusionConfig(**fusion)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    return cfg
