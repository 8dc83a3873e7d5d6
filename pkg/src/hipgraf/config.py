"""Configuration dataclasses and the flat run-config file format.

A run config is a text file of ``key = value`` lines (``#`` starts a
comment). Every key has a documented default below; unknown keys are a hard
error so typos cannot silently fall back to defaults. The same keys are
exposed as ``--key value`` command-line overrides, which win over the file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

VARIANTS = ("full", "no_mmf", "no_tgcn", "concat_baseline")
FUSION_MODES = ("concat", "add")


@dataclass
class BackboneConfig:
    """Shapes of the two feature branches and their shared output map."""

    input_size: int = 128
    feature_size: int = 32
    channels: int = 32
    unet_depth: int = 3
    patch_size: int = 8
    token_dim: int = 32
    transformer_layers: int = 2
    heads: int = 4

    def validate(self) -> "BackboneConfig":
        for name in ("input_size", "feature_size", "channels", "unet_depth", "patch_size", "token_dim", "transformer_layers", "heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.input_size % self.patch_size:
            raise ConfigError(f"input_size {self.input_size} not divisible by patch_size {self.patch_size}")
        if self.input_size % (1 << self.unet_depth):
            raise ConfigError(f"input_size {self.input_size} not divisible by 2^unet_depth ({1 << self.unet_depth})")
        if self.input_size % self.feature_size:
            raise ConfigError(f"input_size {self.input_size} not divisible by feature_size {self.feature_size}")
        upscale = self.input_size // self.feature_size
        if upscale & (upscale - 1):
            raise ConfigError(f"input_size/feature_size must be a power of two, got {upscale}")
        n_up = self.unet_depth - upscale.bit_length() + 1
        if n_up < 0:
            raise ConfigError(f"unet_depth {self.unet_depth} too shallow for feature_size {self.feature_size} from input_size {self.input_size}")
        if self.channels % (1 << (self.unet_depth - n_up)):
            raise ConfigError(f"channels {self.channels} not divisible by 2^(encoder levels above feature scale) = {1 << (self.unet_depth - n_up)}")
        grid = self.input_size // self.patch_size
        if self.feature_size % grid:
            raise ConfigError(f"feature_size {self.feature_size} not an integer upscale of token grid {grid}")
        up = self.feature_size // grid
        if up & (up - 1):
            raise ConfigError(f"token grid to feature upscale must be a power of two, got {up}")
        if self.token_dim % self.heads:
            raise ConfigError(f"token_dim {self.token_dim} not divisible by heads {self.heads}")
        return self

    @property
    def upscale(self) -> int:
        return self.input_size // self.feature_size


@dataclass
class FusionConfig:
    window: int = 3
    mode: str = "concat"

    def validate(self) -> "FusionConfig":
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"fusion window must be odd and positive, got {self.window}")
        if self.mode not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {self.mode!r}; expected one of {FUSION_MODES}")
        return self


@dataclass
class GraphConfig:
    layers: int = 2
    hidden: int = 64

    def validate(self) -> "GraphConfig":
        if self.layers < 1:
            raise ConfigError(f"gcn_layers must be positive, got {self.layers}")
        if self.hidden < 1:
            raise ConfigError(f"gcn_hidden must be positive, got {self.hidden}")
        return self


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    variant: str = "full"

    def validate(self) -> "ModelConfig":
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        self.backbone.validate()
        self.fusion.validate()
        self.graph.validate()
        return self

    @property
    def uses_mmf(self) -> bool:
        return self.variant in ("full", "no_tgcn")

    @property
    def uses_tgcn(self) -> bool:
        return self.variant in ("full", "no_mmf")


@dataclass
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 100
    batch_size: int = 2
    lam: float = 0.1
    sigma: float = 2.0
    hflip_prob: float = 0.5
    seed: int = 0
    max_steps: int = 0

    def validate(self) -> "TrainConfig":
        if self.lr < 0:
            raise ConfigError(f"lr must be nonnegative, got {self.lr}")
        for name in ("epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be nonnegative, got {self.lam}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not 0 <= self.hflip_prob <= 1:
            raise ConfigError(f"hflip_prob must lie in [0,1], got {self.hflip_prob}")
        if self.max_steps < 0:
            raise ConfigError(f"max_steps must be nonnegative, got {self.max_steps}")
        return self


@dataclass
class GeneratorConfig:
    n_samples: int = 64
    class_balance: float = 0.5
    spacing: float = 0.1
    speckle_gamma: float = 0.3
    size: int = 128
    seed: int = 0
    group_size: int = 0

    def validate(self) -> "GeneratorConfig":
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be positive, got {self.n_samples}")
        if not 0 <= self.class_balance <= 1:
            raise ConfigError(f"class_balance must lie in [0,1], got {self.class_balance}")
        if self.spacing <= 0:
            raise ConfigError(f"spacing must be positive, got {self.spacing}")
        if self.speckle_gamma < 0:
            raise ConfigError(f"speckle_gamma must be nonnegative, got {self.speckle_gamma}")
        if self.size < 32:
            raise ConfigError(f"image size must be at least 32, got {self.size}")
        if self.group_size < 0:
            raise ConfigError(f"group_size must be nonnegative, got {self.group_size}")
        return self


@dataclass
class EvalConfig:
    folds: int = 5
    grouped: bool = False

    def validate(self) -> "EvalConfig":
        if self.folds < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")
        return self


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default, help). The flat namespace is the config file format
# and the CLI override surface.
KEY_SPECS: dict[str, tuple] = {
    "input_size": (int, 128, "square input image side in px"),
    "feature_size": (int, 32, "heatmap side in px (input_size must be a power-of-two multiple)"),
    "channels": (int, 32, "feature channels produced by each branch"),
    "unet_depth": (int, 3, "number of encoder pooling steps in the local branch"),
    "patch_size": (int, 8, "square patch side for the global branch"),
    "token_dim": (int, 32, "embedding width of the global branch tokens"),
    "transformer_layers": (int, 2, "encoder layers in the global branch"),
    "heads": (int, 4, "attention heads per encoder layer"),
    "mmf_window": (int, 3, "odd neighborhood side for mutual modulation fusion"),
    "fusion_mode": (str, "concat", "combine modulated maps by 'concat' or 'add'"),
    "variant": (str, "full", "model variant: full, no_mmf, no_tgcn or concat_baseline"),
    "gcn_layers": (int, 2, "graph refinement layers"),
    "gcn_hidden": (int, 64, "middle width of the classification head"),
    "lr": (float, 1e-4, "Adam learning rate"),
    "epochs": (int, 100, "training epochs"),
    "batch_size": (int, 2, "samples per optimizer step"),
    "lambda": (float, 0.1, "weight of the classification loss"),
    "sigma": (float, 2.0, "ground-truth heatmap stddev in heatmap px"),
    "hflip_prob": (float, 0.5, "probability of horizontal flip per sample per epoch"),
    "seed": (int, 0, "master seed for init, shuffling, augmentation and generation"),
    "max_steps": (int, 0, "stop after this many optimizer steps (0 = run all epochs)"),
    "n_samples": (int, 64, "phantom dataset size"),
    "class_balance": (float, 0.5, "fraction of abnormal samples to generate"),
    "spacing": (float, 0.1, "pixel spacing in mm/px"),
    "speckle_gamma": (float, 0.3, "multiplicative speckle amplitude"),
    "group_size": (int, 0, "samples per synthetic subject group (0 = no group column)"),
    "folds": (int, 5, "cross-validation folds"),
    "grouped": (_parse_bool, False, "keep manifest groups within one fold"),
}


def default_run_config() -> dict:
    return {key: spec[1] for key, spec in KEY_SPECS.items()}


def parse_config_file(path: str | Path) -> dict:
    """Read ``key = value`` lines; unknown keys and bad values are errors."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KEY_SPECS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        parser = KEY_SPECS[key][0]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def merge_run_config(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    """defaults <- file <- overrides, with unknown-key checks on each layer."""
    merged = default_run_config()
    for layer in (file_values or {}, overrides or {}):
        for key, value in layer.items():
            if key not in KEY_SPECS:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(value, str):
                parser = KEY_SPECS[key][0]
                try:
                    value = parser(value)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {exc}") from exc
            merged[key] = value
    return merged


def model_config_from(values: dict) -> ModelConfig:
    cfg = ModelConfig(
        backbone=BackboneConfig(
            input_size=values["input_size"],
            feature_size=values["feature_size"],
            channels=values["channels"],
            unet_depth=values["unet_depth"],
            patch_size=values["patch_size"],
            token_dim=values["token_dim"],
            transformer_layers=values["transformer_layers"],
            heads=values["heads"],
        ),
        fusion=FusionConfig(window=values["mmf_window"], mode=values["fusion_mode"]),
        graph=GraphConfig(layers=values["gcn_layers"], hidden=values["gcn_hidden"]),
        variant=values["variant"],
    )
    return cfg.validate()


def train_config_from(values: dict) -> TrainConfig:
    cfg = TrainConfig(
        lr=values["lr"],
        epochs=values["epochs"],
        batch_size=values["batch_size"],
        lam=values["lambda"],
        sigma=values["sigma"],
        hflip_prob=values["hflip_prob"],
        seed=values["seed"],
        max_steps=values["max_steps"],
    )
    return cfg.validate()


def generator_config_from(values: dict) -> GeneratorConfig:
    cfg = GeneratorConfig(
        n_samples=values["n_samples"],
        class_balance=values["class_balance"],
        spacing=values["spacing"],
        speckle_gamma=values["speckle_gamma"],
        size=values["input_size"],
        seed=values["seed"],
        group_size=values["group_size"],
    )
    return cfg.validate()


def eval_config_from(values: dict) -> EvalConfig:
    return EvalConfig(folds=values["folds"], grouped=values["grouped"]).validate()


def run_config_to_items(values: dict) -> dict[str, str]:
    """Stringify a merged run config for embedding in checkpoint headers."""
    return {key: repr(values[key]) if isinstance(values[key], float) else str(values[key]) for key in KEY_SPECS}


def run_config_from_items(items: dict[str, str]) -> dict:
    values = {}
    for key, text in items.items():
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown config key {key!r} in checkpoint header")
        parser = KEY_SPECS[key][0]
        values[key] = parser(text)
    return merge_run_config(file_values=values)
