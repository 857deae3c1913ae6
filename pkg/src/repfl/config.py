"""Experiment configuration: flat ``key = value`` files with dotted section keys.

::

    # comments start with '#'
    seed = 3
    fed.e_min = 0.01
    arms = clean-fedavg, poisoned-defense

Every key has a default (see ``KEYS``); unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from repfl.fedrep import FedConfig
from repfl.model import TrainConfig
from repfl.risk import SvmConfig

ARMS = ("clean-fedavg", "poisoned-fedavg", "poisoned-defense", "clean-defense")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # or a CSV path
    n_per_class: int = 125
    d: int = 16
    classes: int = 4
    separation: float = 4.0
    noise_sigma: float = 1.0
    test_fraction: float = 0.2

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


@dataclass(frozen=True)
class PartitionConfig:
    nodes: int = 10
    scheme: str = "iid"
    beta: float = 0.5

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError(f"nodes must be >= 1, got {self.nodes}")
        if self.scheme not in ("iid", "label-skewed"):
            raise ValueError(f"scheme must be iid or label-skewed, got {self.scheme!r}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class AttackConfig:
    malicious: int = 3
    budget_fraction: Optional[float] = 0.2
    budget: Optional[int] = None
    importance_repeats: int = 5
    reference_steps: int = 100
    max_levels: Optional[int] = None

    def __post_init__(self):
        if self.malicious < 0:
            raise ValueError(f"malicious must be >= 0, got {self.malicious}")
        if (self.budget is None) == (self.budget_fraction is None):
            raise ValueError("set exactly one of budget and budget_fraction")
        if self.budget_fraction is not None and not 0 <= self.budget_fraction <= 1:
            raise ValueError(f"budget_fraction must lie in [0, 1], got {self.budget_fraction}")
        if self.budget is not None and self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")
        if self.importance_repeats < 1:
            raise ValueError(f"importance_repeats must be >= 1, got {self.importance_repeats}")
        if self.reference_steps < 1:
            raise ValueError(f"reference_steps must be >= 1, got {self.reference_steps}")
        if self.max_levels is not None and self.max_levels < 1:
            raise ValueError(f"max_levels must be >= 1, got {self.max_levels}")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    data: DataConfig = DataConfig()
    partition: PartitionConfig = PartitionConfig()
    attack: AttackConfig = AttackConfig()
    svm: SvmConfig = SvmConfig()
    train: TrainConfig = TrainConfig()
    fed: FedConfig = FedConfig()
    arms: Tuple[str, ...] = ARMS
    out: str = "results"
    audit_log: bool = False

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not self.arms:
            raise ValueError("arms: at least one arm is required")
        for arm in self.arms:
            if arm not in ARMS:
                raise ValueError(f"arms: unknown arm {arm!r}, expected one of {', '.join(ARMS)}")
        if len(set(self.arms)) != len(self.arms):
            raise ValueError("arms: duplicate arm")
        if self.fed.rounds < 1:
            raise ValueError(f"fed.rounds must be >= 1, got {self.fed.rounds}")
        if self.attack.malicious > self.partition.nodes:
            raise ValueError(f"attack.malicious={self.attack.malicious} exceeds partition.nodes={self.partition.nodes}")

    def fed_config(self, defense: bool) -> FedConfig:
        return dataclasses.replace(self.fed, train=self.train, defense_enabled=defense, master_seed=self.seed)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _optional(conv: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        return None if text.lower() in ("none", "") else conv(text)
    return parse


def _arms(text: str) -> Tuple[str, ...]:
    return tuple(a.strip() for a in text.split(",") if a.strip())


def _int(text: str) -> int:
    return int(text, 0)


# key -> (section or None, field name, parser)
KEYS: Dict[str, Tuple[Optional[str], str, Callable[[str], Any]]] = {
    "seed": (None, "seed", _int),
    "arms": (None, "arms", _arms),
    "out": (None, "out", str),
    "audit_log": (None, "audit_log", _bool),
    "data.source": ("data", "source", str),
    "data.n_per_class": ("data", "n_per_class", _int),
    "data.d": ("data", "d", _int),
    "data.classes": ("data", "classes", _int),
    "data.separation": ("data", "separation", float),
    "data.noise_sigma": ("data", "noise_sigma", float),
    "data.test_fraction": ("data", "test_fraction", float),
    "partition.nodes": ("partition", "nodes", _int),
    "partition.scheme": ("partition", "scheme", str),
    "partition.beta": ("partition", "beta", float),
    "attack.malicious": ("attack", "malicious", _int),
    "attack.budget_fraction": ("attack", "budget_fraction", _optional(float)),
    "attack.budget": ("attack", "budget", _optional(_int)),
    "attack.importance_repeats": ("attack", "importance_repeats", _int),
    "attack.reference_steps": ("attack", "reference_steps", _int),
    "attack.max_levels": ("attack", "max_levels", _optional(_int)),
    "svm.epochs": ("svm", "epochs", _int),
    "svm.learning_rate": ("svm", "learning_rate", float),
    "svm.lam": ("svm", "lam", float),
    "svm.tol": ("svm", "tol", float),
    "train.learning_rate": ("train", "learning_rate", float),
    "train.reg_weight": ("train", "reg_weight", float),
    "train.local_steps": ("train", "local_steps", _int),
    "fed.rounds": ("fed", "rounds", _int),
    "fed.e_min": ("fed", "e_min", float),
    "fed.r_min": ("fed", "r_min", float),
    "fed.r_init": ("fed", "r_init", float),
    "fed.reputation_rule": ("fed", "reputation_rule", str),
    "fed.init_scale": ("fed", "init_scale", float),
    "fed.workers": ("fed", "workers", _int),
}


def parse_lines(lines) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def build_config(values: Dict[str, str], base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    """Apply raw string overrides to ``base``; errors name the offending key."""
    top: Dict[str, Any] = {}
    sections: Dict[str, Dict[str, Any]] = {}
    for key, text in values.items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        section, name, conv = KEYS[key]
        try:
            value = conv(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {text!r} ({exc})") from None
        if section is None:
            top[name] = value
        else:
            sections.setdefault(section, {})[name] = value
    attack = sections.get("attack", {})
    # a budget count replaces the default fraction and vice versa
    if attack.get("budget") is not None and "budget_fraction" not in attack:
        attack["budget_fraction"] = None
    if attack.get("budget_fraction") is not None and "budget" not in attack:
        attack["budget"] = None
    for section, changes in sections.items():
        current = getattr(base, section)
        try:
            top[section] = dataclasses.replace(current, **changes)
        except ValueError as exc:
            raise ConfigError(f"{section}: {exc}") from None
    try:
        return dataclasses.replace(base, **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    return build_config(parse_lines(text.splitlines()))


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    """Every key with its resolved value, in table order; parses back to ``cfg``."""
    lines = []
    for key, (section, name, _) in KEYS.items():
        holder = cfg if section is None else getattr(cfg, section)
        lines.append(f"{key} = {_format(getattr(holder, name))}")
    return "\n".join(lines) + "\n"
