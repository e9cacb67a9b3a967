"""Run configuration: a dataclass validated up front, serialized to and from
an INI-style sections file (see README for the schema)."""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigurationError


@dataclass
class RunConfig:
    # model
    dim: int = 512
    num_scales: int = 4  # H
    num_queries: int = 10  # N
    slot_iterations: int = 3  # K
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 8  # M
    relation_embed_dim: int = 16
    sampling_points: int = 4
    frame_len: int = 64  # V
    c_max: int = 10
    vocab_size: int = 64
    max_caption_len: int = 12
    snap_predictions: bool = True  # quantize predicted boundaries to the frame grid

    # training
    lr: float = 5e-5
    epochs: int = 30
    seed: int = 0
    lambda_loc: float = 2.0
    lambda_cnt: float = 1.0
    lambda_cap: float = 1.0
    lambda_prop: float = 1.0
    deep_supervision: bool = True

    # data
    dataset_path: str = ""
    eval_dataset_path: str = ""
    n_videos: int = 32
    regime_mix: str = "mixed"  # hierarchical | sequential | mixed
    feature_noise: float = 0.1
    cooccurrence: bool = True  # adjacent events tend to share caption content

    # ablation
    position_prior: bool = True
    relation_prior: bool = True
    relation_metric: str = "overlap"  # overlap | center

    extra: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.dim % 2 != 0 or self.dim % self.heads != 0:
            raise ConfigurationError(f"dim {self.dim} must be even and divisible by heads {self.heads}")
        if self.frame_len % 2 ** (self.num_scales - 1) != 0:
            raise ConfigurationError(
                f"frame_len {self.frame_len} must be divisible by 2^(H-1)={2 ** (self.num_scales - 1)}"
            )
        if self.relation_metric not in ("overlap", "center"):
            raise ConfigurationError(f"relation_metric must be overlap|center, got {self.relation_metric}")
        if self.regime_mix not in ("hierarchical", "sequential", "mixed"):
            raise ConfigurationError(f"regime_mix must be hierarchical|sequential|mixed, got {self.regime_mix}")
        for name in ("num_queries", "slot_iterations", "dec_layers", "c_max", "vocab_size"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.enc_layers < 0:
            raise ConfigurationError("enc_layers must be >= 0")
        return self


_SECTIONS = {
    "model": [
        "dim", "num_scales", "num_queries", "slot_iterations", "enc_layers",
        "dec_layers", "heads", "relation_embed_dim", "sampling_points",
        "frame_len", "c_max", "vocab_size", "max_caption_len", "snap_predictions",
    ],
    "training": [
        "lr", "epochs", "seed", "lambda_loc", "lambda_cnt", "lambda_cap",
        "lambda_prop", "deep_supervision",
    ],
    "data": [
        "dataset_path", "eval_dataset_path", "n_videos", "regime_mix",
        "feature_noise", "cooccurrence",
    ],
    "ablation": ["position_prior", "relation_prior", "relation_metric"],
}


def save_config(config: RunConfig, path: str) -> None:
    parser = configparser.ConfigParser()
    values = asdict(config)
    for section, keys in _SECTIONS.items():
        parser[section] = {k: str(values[k]) for k in keys}
    with open(path, "w") as fh:
        parser.write(fh)


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    parser = configparser.ConfigParser()
    parser.read(path)
    kwargs = {}
    types = {f.name: f.type for f in fields(RunConfig)}
    defaults = RunConfig()
    for section, keys in _SECTIONS.items():
        if section not in parser:
            continue
        for k in keys:
            if k not in parser[section]:
                continue
            raw = parser[section][k]
            current = getattr(defaults, k)
            if isinstance(current, bool):
                kwargs[k] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                kwargs[k] = int(raw)
            elif isinstance(current, float):
                kwargs[k] = float(raw)
            else:
                kwargs[k] = raw
    # environment overrides for paths and seed only
    if os.environ.get("DENSEEVENTS_DATASET"):
        kwargs["dataset_path"] = os.environ["DENSEEVENTS_DATASET"]
    if os.environ.get("DENSEEVENTS_EVAL_DATASET"):
        kwargs["eval_dataset_path"] = os.environ["DENSEEVENTS_EVAL_DATASET"]
    if os.environ.get("DENSEEVENTS_SEED"):
        kwargs["seed"] = int(os.environ["DENSEEVENTS_SEED"])
    try:
        return RunConfig(**kwargs).validate()
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
