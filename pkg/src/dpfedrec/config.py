"""Experiment configuration and its INI file form.

Config files are flat ``key = value`` pairs grouped into the sections
``[experiment]``, ``[data]``, ``[privacy]``, ``[train]`` and ``[psi]``.
Every key can be overridden from the command line.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .gnn import TrainConfig
from .privacy import PrivacyBudget


class ConfigError(ValueError):
    pass


class Mode(str, enum.Enum):
    CENTRALIZED = "centralized"
    FEDGRAPHNN = "fedgraphnn"
    FEDREC = "fedrec"
    DP_FEDGRAPHNN = "dp-fedgraphnn"
    DP_FEDREC = "dp-fedrec"

    @property
    def extends(self) -> bool:
        return self in (Mode.FEDREC, Mode.DP_FEDREC)

    @property
    def label(self) -> str:
        return {
            Mode.CENTRALIZED: "Centralized",
            Mode.FEDGRAPHNN: "FedGraphNN",
            Mode.FEDREC: "FedRec",
            Mode.DP_FEDGRAPHNN: "DP-FedGraphNN",
            Mode.DP_FEDREC: "DP-FedRec",
        }[self]


MODE_ORDER = list(Mode)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: Mode = Mode.DP_FEDREC
    clients: int = 8
    k: int = 2
    rounds: int = 50
    master_seed: int = 0
    dataset: str = "data/ml-100k"
    test_fraction: float = 0.2
    partition_rule: str = "first"
    budget: PrivacyBudget = field(default_factory=PrivacyBudget)
    local_noise_scale: float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)
    psi_mode: str = "commutative"
    psi_group: str = "x25519"
    reextend_every_round: bool = False
    noise_before_extension: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.clients < 1:
            raise ConfigError("clients must be at least 1")
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if self.k < 0:
            raise ConfigError("k must be non-negative")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")

    @property
    def effective_clients(self) -> int:
        return 1 if self.mode is Mode.CENTRALIZED else self.clients

    @property
    def effective_k(self) -> int | None:
        return self.k if self.mode.extends else None

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": {
                "mode": self.mode.value,
                "clients": self.clients,
                "k": self.k,
                "rounds": self.rounds,
                "master_seed": self.master_seed,
                "reextend_every_round": self.reextend_every_round,
                "noise_before_extension": self.noise_before_extension,
            },
            "data": {
                "dataset": self.dataset,
                "test_fraction": self.test_fraction,
                "partition_rule": self.partition_rule,
            },
            "privacy": {
                "eps1": self.budget.eps_topology,
                "eps2": self.budget.eps_weights,
                "sparsity_fraction": self.budget.sparsity_fraction,
                "local_noise_scale": self.local_noise_scale,
            },
            "train": {
                "d": self.train.d,
                "layers": self.train.layers,
                "hidden": self.train.hidden,
                "lr": self.train.lr,
                "local_epochs": self.train.local_epochs,
                "batch": self.train.batch,
            },
            "psi": {"mode": self.psi_mode, "group": self.psi_group},
        }


# flat key -> (section, attribute path, type)
_KEYS: dict[str, tuple[str, str, type]] = {
    "mode": ("experiment", "mode", str),
    "clients": ("experiment", "clients", int),
    "k": ("experiment", "k", int),
    "rounds": ("experiment", "rounds", int),
    "master_seed": ("experiment", "master_seed", int),
    "seed": ("experiment", "master_seed", int),
    "reextend_every_round": ("experiment", "reextend_every_round", bool),
    "noise_before_extension": ("experiment", "noise_before_extension", bool),
    "dataset": ("data", "dataset", str),
    "test_fraction": ("data", "test_fraction", float),
    "partition_rule": ("data", "partition_rule", str),
    "eps1": ("privacy", "budget.eps_topology", float),
    "eps2": ("privacy", "budget.eps_weights", float),
    "sparsity_fraction": ("privacy", "budget.sparsity_fraction", float),
    "local_noise_scale": ("privacy", "local_noise_scale", float),
    "d": ("train", "train.d", int),
    "layers": ("train", "train.layers", int),
    "hidden": ("train", "train.hidden", int),
    "lr": ("train", "train.lr", float),
    "local_epochs": ("train", "train.local_epochs", int),
    "batch": ("train", "train.batch", int),
    "psi_mode": ("psi", "psi_mode", str),
    "psi_group": ("psi", "psi_group", str),
}

_SECTION_ALIASES = {("psi", "mode"): "psi_mode", ("psi", "group"): "psi_group"}


def _coerce(value: Any, typ: type, key: str) -> Any:
    if isinstance(value, typ) and not (typ is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return typ(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {typ.__name__}") from None


def apply_overrides(config: ExperimentConfig, overrides: dict[str, Any]) -> ExperimentConfig:
    """Return ``config`` with flat-keyed overrides applied; ``None`` values are skipped."""
    top: dict[str, Any] = {}
    budget: dict[str, Any] = {}
    train: dict[str, Any] = {}
    for key, value in overrides.items():
        if value is None:
            continue
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        _, path, typ = _KEYS[key]
        value = _coerce(value, typ, key)
        if path.startswith("budget."):
            budget[path[7:]] = value
        elif path.startswith("train."):
            train[path[6:]] = value
        else:
            top[path] = value
    try:
        if budget:
            top["budget"] = dataclasses.replace(config.budget, **budget)
        if train:
            top["train"] = dataclasses.replace(config.train, **train)
        if "mode" in top:
            top["mode"] = Mode(top["mode"])
        return dataclasses.replace(config, **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    flat: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[_SECTION_ALIASES.get((section, key), key)] = value
    return apply_overrides(base or ExperimentConfig(), flat)


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    config = ExperimentConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        config = parse_config_text(text, config)
    return apply_overrides(config, overrides or {})


def dump_config(config: ExperimentConfig) -> str:
    parser = configparser.ConfigParser()
    for section, values in config.to_dict().items():
        parser[section] = {k: str(v) for k, v in values.items() if v is not None}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
