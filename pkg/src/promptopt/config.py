"""Run configuration: one TOML file plus flag overrides, flags winning.

The file has four optional tables (corpus, embedder, env, train) and a
few top-level keys. Unknown keys anywhere are rejected before any work
starts, so sweeps that mutate single keys fail loudly on typos.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .embedder import EmbedderConfig
from .errors import ConfigError
from .trainer import TrainConfig

ENV_KINDS = ("mock", "http")

_FORMAT_ALIASES = {
    "alpaca": "alpaca_jsonl",
    "dolly": "dolly_jsonl",
    "alpaca_jsonl": "alpaca_jsonl",
    "dolly_jsonl": "dolly_jsonl",
}

_TOP_KEYS = {"seed", "out_dir", "template", "corpus", "embedder", "env", "train"}
_CORPUS_KEYS = {"dataset", "format", "splits", "pool_size"}
_EMBEDDER_KEYS = {"kind", "dim", "normalization", "salt", "path", "base_url", "model", "token_env", "max_in_flight"}
_ENV_KEYS = {"kind", "base_url", "model", "token_env", "max_in_flight"}
_TRAIN_KEYS = {
    "batch_size", "epochs", "learning_rate", "baseline", "baseline_decay", "k_max",
    "lambda", "layers", "heads", "dim", "mlp_depth", "variant", "optimizer",
    "max_tokens", "temperature",
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "runs"
    template: str | None = None
    dataset: str | None = None
    dataset_format: str = "alpaca_jsonl"
    splits: tuple[int, int, int] = (200, 800, 800)
    pool_size: int = 20
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    env_kind: str = "mock"
    env_base_url: str | None = None
    env_model: str | None = None
    env_token_env: str | None = None
    env_max_in_flight: int = 4
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "RunConfig":
        if self.dataset_format not in ("alpaca_jsonl", "dolly_jsonl"):
            raise ConfigError(f"unknown dataset format {self.dataset_format!r}")
        if len(self.splits) != 3 or any(n < 0 for n in self.splits):
            raise ConfigError(f"splits must be three non-negative sizes, got {self.splits}")
        if self.pool_size < 1:
            raise ConfigError(f"pool_size must be >= 1, got {self.pool_size}")
        if self.env_kind not in ENV_KINDS:
            raise ConfigError(f"unknown env kind {self.env_kind!r}; expected one of {ENV_KINDS}")
        if self.env_kind == "http" and not (self.env_base_url and self.env_model):
            raise ConfigError("env kind 'http' requires base_url and model")
        self.embedder.validate()
        self.train.validate()
        if self.embedder.dim != self.train.dim:
            raise ConfigError(
                f"embedder dim {self.embedder.dim} must equal model dim {self.train.dim}"
                " (one shared provider per run)"
            )
        return self

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "template": self.template,
            "corpus": {
                "dataset": self.dataset,
                "format": self.dataset_format,
                "splits": list(self.splits),
                "pool_size": self.pool_size,
            },
            "embedder": {
                "kind": self.embedder.kind,
                "dim": self.embedder.dim,
                "normalization": self.embedder.normalization,
                "salt": self.embedder.salt,
            },
            "env": {"kind": self.env_kind, "base_url": self.env_base_url, "model": self.env_model},
            "train": self.train.as_dict(),
        }


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {sorted(unknown)}")


def _parse_format(value: str) -> str:
    if value not in _FORMAT_ALIASES:
        raise ConfigError(f"unknown dataset format {value!r}; expected alpaca or dolly")
    return _FORMAT_ALIASES[value]


def load_run_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Build and validate a RunConfig from an optional TOML file and overrides.

    ``overrides`` uses the flat CLI vocabulary (seed, dataset, format,
    splits, pool_size, template, out_dir, env, base_url, model, token_env,
    embedder-kind, dim, heads, hgt_layers, k_max, lambda, variant, epochs,
    batch_size, learning_rate, optimizer, baseline, max_tokens,
    temperature, salt, embedding_file).
    """
    raw: dict = {}
    if path is not None:
        try:
            raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

    _reject_unknown(raw, _TOP_KEYS, "top-level")
    corpus = dict(raw.get("corpus", {}))
    embedder = dict(raw.get("embedder", {}))
    env = dict(raw.get("env", {}))
    train = dict(raw.get("train", {}))
    _reject_unknown(corpus, _CORPUS_KEYS, "[corpus]")
    _reject_unknown(embedder, _EMBEDDER_KEYS, "[embedder]")
    _reject_unknown(env, _ENV_KEYS, "[env]")
    _reject_unknown(train, _TRAIN_KEYS, "[train]")

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    def take(key, default=None):
        return overrides.pop(key) if key in overrides else default

    seed = take("seed", raw.get("seed", 0))
    out_dir = take("out_dir", raw.get("out_dir", "runs"))
    template = take("template", raw.get("template"))
    dataset = take("dataset", corpus.get("dataset"))
    fmt = _parse_format(take("format", corpus.get("format", "alpaca_jsonl")))
    splits = take("splits", corpus.get("splits", (200, 800, 800)))
    if isinstance(splits, str):
        try:
            splits = tuple(int(part) for part in splits.split(","))
        except ValueError as exc:
            raise ConfigError(f"invalid splits {splits!r}; expected n_train,n_val,n_test") from exc
    splits = tuple(int(n) for n in splits)
    pool_size = int(take("pool_size", corpus.get("pool_size", 20)))

    dim = int(take("dim", train.get("dim", embedder.get("dim", 32))))
    embedder_config = EmbedderConfig(
        kind=take("embedder_kind", embedder.get("kind", "hash")),
        dim=dim,
        normalization=embedder.get("normalization", "l2"),
        salt=int(take("salt", embedder.get("salt", 0))),
        path=take("embedding_file", embedder.get("path")),
        base_url=embedder.get("base_url"),
        model=embedder.get("model"),
        token_env=embedder.get("token_env"),
        max_in_flight=int(embedder.get("max_in_flight", 4)),
    )

    variant = take("variant", train.get("variant", "full"))
    if isinstance(variant, str):
        variant = variant.replace("-", "_")
    train_config = TrainConfig(
        batch_size=int(take("batch_size", train.get("batch_size", 4))),
        epochs=int(take("epochs", train.get("epochs", 5))),
        learning_rate=float(take("learning_rate", train.get("learning_rate", 1e-2))),
        baseline=take("baseline", train.get("baseline", "ema")),
        baseline_decay=float(train.get("baseline_decay", 0.9)),
        k_max=int(take("k_max", train.get("k_max", 2))),
        seed=int(seed),
        env=take("env", env.get("kind", "mock")),
        lambda_=float(take("lambda", train.get("lambda", 0.4))),
        layers=int(take("hgt_layers", train.get("layers", 2))),
        heads=int(take("heads", train.get("heads", 2))),
        dim=dim,
        mlp_depth=int(train.get("mlp_depth", 1)),
        variant=variant,
        optimizer=take("optimizer", train.get("optimizer", "sgd")),
        max_tokens=int(take("max_tokens", train.get("max_tokens", 256))),
        temperature=float(take("temperature", train.get("temperature", 0.0))),
    )

    config = RunConfig(
        seed=int(seed),
        out_dir=str(out_dir),
        template=template,
        dataset=dataset,
        dataset_format=fmt,
        splits=splits,
        pool_size=pool_size,
        embedder=embedder_config,
        env_kind=train_config.env,
        env_base_url=take("base_url", env.get("base_url")),
        env_model=take("model", env.get("model")),
        env_token_env=take("token_env", env.get("token_env")),
        env_max_in_flight=int(env.get("max_in_flight", 4)),
        train=train_config,
    )
    overrides.pop("config", None)
    if overrides:
        raise ConfigError(f"unknown override key(s): {sorted(overrides)}")
    return config.validate()
