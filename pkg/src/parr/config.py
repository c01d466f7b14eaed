"""Run configuration: YAML in, validated dataclasses out.

Unknown keys and missing required keys are rejected with the line number of
the offending section or key.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .agent import AgentConfig
from .nn import ContractError
from .novelty import NoveltyConfig


class ConfigError(ValueError):
    pass


@dataclass
class EnvConfig:
    name: str = "keydoor"
    sticky_p: float = 0.25
    # keydoor
    width: int = 10
    height: int = 10
    start: list = field(default_factory=lambda: [0, 0])
    key: list = field(default_factory=lambda: [9, 9])
    door: list = field(default_factory=lambda: [0, 9])
    step_limit: int = 200
    # chain
    n_states: int = 8
    left_reward: float = 0.05
    right_reward: float = 1.0
    p_forward: float = 0.7
    p_back: float = 0.1
    chain_start: object = 0
    episode_length: int = 50


@dataclass
class RunSection:
    total_steps: int = 0
    eval_episodes: int = 10
    seed: int = 0
    success_threshold: float = 1.0
    # stop at the K-th evaluation reaching success_threshold (0 = never)
    stop_after_successes: int = 0
    record_wall_time: bool = False


@dataclass
class EquivalenceSection:
    train_steps: int = 1000
    mismatch_seeds: bool = False


@dataclass
class BenchSection:
    sizes: list = field(default_factory=lambda: [1024, 2048, 4096])
    repeats: int = 1


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    novelty: NoveltyConfig = field(default_factory=NoveltyConfig)
    run: RunSection = field(default_factory=RunSection)
    equivalence: EquivalenceSection = field(default_factory=EquivalenceSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            section = dataclasses.asdict(getattr(self, f.name))
            out[f.name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out


SECTIONS = {
    "env": EnvConfig,
    "agent": AgentConfig,
    "novelty": NoveltyConfig,
    "run": RunSection,
    "equivalence": EquivalenceSection,
    "bench": BenchSection,
}
REQUIRED = {"env": ["name"], "run": ["total_steps"]}
TUPLE_FIELDS = {("agent", "hidden"), ("novelty", "fixed_hidden"), ("novelty", "predictor_hidden")}


def _line_index(text: str) -> dict:
    """Map ``(section,)`` and ``(section, key)`` to 1-based line numbers."""
    lines = {}
    root = yaml.compose(text)
    if root is None or not isinstance(root, yaml.MappingNode):
        return lines
    for knode, vnode in root.value:
        lines[(knode.value,)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                lines[(knode.value, k2.value)] = k2.start_mark.line + 1
    return lines


def from_dict(data: dict, lines: dict | None = None) -> RunConfig:
    lines = lines or {}

    def where(*path) -> str:
        ln = lines.get(path)
        return f"line {ln}: " if ln else ""

    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")
    for name in data:
        if name not in SECTIONS:
            raise ConfigError(f"{where(name)}unknown section {name!r}")
    for name, keys in REQUIRED.items():
        if name not in data:
            raise ConfigError(f"missing required section {name!r}")
        for k in keys:
            if not isinstance(data[name], dict) or k not in data[name]:
                raise ConfigError(f"{where(name)}missing required key {name}.{k}")
    sections = {}
    for name, cls in SECTIONS.items():
        values = data.get(name) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"{where(name)}section {name!r} must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        for k in values:
            if k not in known:
                raise ConfigError(f"{where(name, k)}unknown key {name}.{k}")
        kwargs = {k: tuple(v) if (name, k) in TUPLE_FIELDS else v for k, v in values.items()}
        sections[name] = cls(**kwargs)
    cfg = RunConfig(**sections)
    try:
        validate(cfg)
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def validate(cfg: RunConfig):
    if cfg.env.name not in ("keydoor", "chain"):
        raise ContractError(f"env.name must be 'keydoor' or 'chain', got {cfg.env.name!r}")
    if not 0.0 <= cfg.env.sticky_p < 1.0:
        raise ContractError("env.sticky_p must be in [0, 1)")
    if cfg.run.total_steps < 0:
        raise ContractError("run.total_steps must be >= 0")
    if cfg.run.eval_episodes < 1:
        raise ContractError("run.eval_episodes must be >= 1")
    cfg.agent.validate()


def read_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
        lines = _line_index(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return from_dict(data, lines)


def write_config(cfg: RunConfig, path):
    Path(path).write_text(dump_config(cfg))


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
