"""Plain-text experiment configuration.

Files use `key = value` pairs under [section] headers (INI style):

    [audio]
    sample_rate_hz = 22016
    mdct_bands = 128
    alpha = 0.3
    noise_scale = 1.0
    db_reference = 96.0
    db_floor = -100.0

    [model]
    latent_dim = 512
    num_blocks = 6
    seed_blocks = 4
    seed_bands = 2
    channels = 512, 512, 512, 512, 256, 128, 64
    output_channels = 2

    [train]
    learning_rate = 0.0001
    beta1 = 0.5
    beta2 = 0.9
    n_critic = 2
    gp_lambda = 10.0
    drift_epsilon = 0.001
    batch_size = 8
    noise_scale = 1.0
    seed = 0
    iterations = 1000
    checkpoint_every = 0
    freeze_blocks =       ; e.g. 1, 2 to freeze the two deepest blocks

    [data]
    source = tones        ; or: wavs
    count = 64            ; tones: corpus size
    path = ./audio        ; wavs: directory of .wav files

Unknown keys are rejected so typos fail fast. All randomness flows from
[train] seed.
"""

import configparser
from dataclasses import dataclass

from .errors import ConfigError
from .nn.model import ModelConfig
from .nn.train import TrainConfig

_AUDIO_KEYS = {
    "sample_rate_hz": int,
    "mdct_bands": int,
    "alpha": float,
    "noise_scale": float,
    "db_reference": float,
    "db_floor": float,
}
_MODEL_KEYS = {
    "latent_dim": int,
    "num_blocks": int,
    "seed_blocks": int,
    "seed_bands": int,
    "channels": "int_list",
    "output_channels": int,
}
_TRAIN_KEYS = {
    "learning_rate": float,
    "beta1": float,
    "beta2": float,
    "n_critic": int,
    "gp_lambda": float,
    "drift_epsilon": float,
    "batch_size": int,
    "noise_scale": float,
    "seed": int,
    "iterations": int,
    "checkpoint_every": int,
    "freeze_blocks": "int_list",
}
_DATA_KEYS = {
    "source": str,
    "count": int,
    "path": str,
}


@dataclass
class AppConfig:
    sample_rate_hz: int = 22016
    mdct_bands: int = 128
    alpha: float = 0.3
    noise_scale: float = 1.0
    db_reference: float = 96.0
    db_floor: float = -100.0
    model: ModelConfig = None
    train: TrainConfig = None
    data_source: str = "tones"
    data_count: int = 64
    data_path: str = ""
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.mdct_bands < 8 or self.mdct_bands & (self.mdct_bands - 1):
            raise ConfigError("mdct_bands must be a power of two >= 8")
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample_rate_hz must be positive")
        if self.data_source not in ("tones", "wavs"):
            raise ConfigError(f"unknown data source {self.data_source!r}")


def _convert(section, key, kind, raw):
    try:
        if kind == "int_list":
            return tuple(int(part.strip()) for part in raw.split(",") if part.strip())
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def _section(parser, name, known):
    if not parser.has_section(name):
        return {}
    values = {}
    for key, raw in parser.items(name):
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{name}]")
        values[key] = _convert(name, key, known[key], raw)
    return values


def load_config(path):
    """Parse an experiment file into an AppConfig; ConfigError on problems."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    audio = _section(parser, "audio", _AUDIO_KEYS)
    model_raw = _section(parser, "model", _MODEL_KEYS)
    train_raw = _section(parser, "train", _TRAIN_KEYS)
    data = _section(parser, "data", _DATA_KEYS)

    try:
        model_cfg = ModelConfig(**model_raw)
    except TypeError as exc:
        raise ConfigError(f"[model]: {exc}") from exc

    rename = {"beta1": "adam_beta1", "beta2": "adam_beta2", "seed": "rng_seed"}
    train_kwargs = {rename.get(k, k): v for k, v in train_raw.items()}
    checkpoint_every = train_kwargs.pop("checkpoint_every", 0)
    train_kwargs.setdefault("alpha", audio.get("alpha", 0.3))
    train_kwargs.setdefault("db_reference", audio.get("db_reference", 96.0))
    try:
        train_cfg = TrainConfig(**train_kwargs)
    except TypeError as exc:
        raise ConfigError(f"[train]: {exc}") from exc

    return AppConfig(
        sample_rate_hz=audio.get("sample_rate_hz", 22016),
        mdct_bands=audio.get("mdct_bands", 128),
        alpha=audio.get("alpha", 0.3),
        noise_scale=audio.get("noise_scale", 1.0),
        db_reference=audio.get("db_reference", 96.0),
        db_floor=audio.get("db_floor", -100.0),
        model=model_cfg,
        train=train_cfg,
        data_source=data.get("source", "tones"),
        data_count=data.get("count", 64),
        data_path=data.get("path", ""),
        checkpoint_every=checkpoint_every,
    )
