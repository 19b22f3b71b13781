"""Run configuration: a flat ``key=value`` file plus ``--key value`` overrides.

Precedence is command line > file > defaults. Every key is typed by its
default; unknown keys and out-of-range values are rejected before any compute.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..models import MAX_DEPTH
from ..numerics import ContractError
from ..strategies.config import TrainConfig

OUTPUT_ROOT_ENV = "PHN_OUTPUT_ROOT"
STRATEGY_NAMES = ("partial-hn", "latent-replay", "naive")
STREAM_TYPES = ("split", "noisy", "noisy-clean", "two-experience")
SOURCES = ("synthetic", "cifar100")
PRECISIONS = {"float32", "float64"}


class ConfigError(ContractError):
    pass


@dataclass(frozen=True)
class RunConfig:
    strategy: str = "partial-hn"
    k: int = 2
    # stream
    source: str = "synthetic"
    stream: str = "split"
    n_experiences: int = 4
    classes_per_exp: int = 5
    stream_seed: int = 0
    num_classes: int = 20
    train_per_class: int = 200
    test_per_class: int = 40
    image_size: int = 16
    noise: float = 0.4
    data_dir: str = ""
    # model and hypernetwork
    nf: int = 8
    emb_dim: int = 32
    hn_d: int = 8
    emb_std: float = 0.2
    # training
    alpha: float = 0.001
    beta: float = 0.001
    lam: float = 0.5
    epochs: int = 1
    batch_size: int = 32
    seed: int = 0
    lookahead: bool = True
    replay_coef: float = 1.0
    buffer_capacity: int = 200
    early_stop: bool = False
    # output
    precision: str = "float32"
    out_dir: str = ""
    name: str = ""
    checkpoints: bool = True

    def validate(self) -> "RunConfig":
        if self.strategy not in STRATEGY_NAMES:
            raise ConfigError(f"strategy must be one of {STRATEGY_NAMES}, got {self.strategy!r}")
        if not 0 <= self.k <= MAX_DEPTH:
            raise ConfigError(f"k must lie in [0, {MAX_DEPTH}], got {self.k}")
        if self.stream not in STREAM_TYPES:
            raise ConfigError(f"stream must be one of {STREAM_TYPES}, got {self.stream!r}")
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.source == "cifar100":
            for split in ("train.bin", "test.bin"):
                if not (Path(self.data_dir) / split).is_file():
                    raise ConfigError(f"data_dir {self.data_dir!r} has no {split}")
        if self.source == "synthetic" and self.image_size < 8:
            raise ConfigError(f"image_size must be >= 8, got {self.image_size}")
        if self.stream.startswith("noisy") and self.num_classes < 20:
            raise ConfigError("noisy streams need num_classes >= 20")
        positive = ("n_experiences", "classes_per_exp", "num_classes", "train_per_class", "test_per_class", "nf", "emb_dim", "hn_d")
        for key in positive:
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.source == "synthetic" and self.stream == "split" and self.n_experiences * self.classes_per_exp > self.num_classes:
            raise ConfigError(
                f"{self.n_experiences} experiences x {self.classes_per_exp} classes needs {self.n_experiences * self.classes_per_exp} classes, num_classes={self.num_classes}"
            )
        try:
            TrainConfig(**self.train_kwargs())
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def train_kwargs(self) -> dict:
        keys = ("alpha", "beta", "lam", "epochs", "batch_size", "seed", "lookahead", "replay_coef", "buffer_capacity", "early_stop")
        return {key: getattr(self, key) for key in keys}

    @property
    def run_name(self) -> str:
        return self.name or f"{self.strategy}-k{self.k}-{self.stream}-seed{self.seed}"

    def output_dir(self) -> Path:
        if self.out_dir:
            return Path(self.out_dir)
        return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / self.run_name

    def to_text(self) -> str:
        return "".join(f"{key}={_format(value)}\n" for key, value in asdict(self).items())


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "on", "yes", "1"):
                return True
            if lowered in ("false", "off", "no", "0"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


def parse_text(text: str, origin: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip().replace("-", "_")
        values[key] = _coerce(key, raw)
    return values


def parse_overrides(args: list[str]) -> dict:
    """Turn ``["--alpha", "0.1", "--k=3"]`` into a typed dict."""
    values, i = {}, 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument {arg!r}")
        body = arg[2:]
        if "=" in body:
            key, raw = body.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"{arg} needs a value")
            key, raw = body, args[i + 1]
            i += 2
        key = key.replace("-", "_")
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, overrides: list[str] | dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        values.update(parse_text(path.read_text(encoding="utf-8"), str(path)))
    if isinstance(overrides, dict):
        values.update({k: _coerce(k, _format(v)) for k, v in overrides.items()})
    elif overrides:
        values.update(parse_overrides(overrides))
    return RunConfig(**values).validate()
