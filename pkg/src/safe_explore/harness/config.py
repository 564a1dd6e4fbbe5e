"""Experiment configuration and its ``key = value`` INI file form.

Sections: ``[experiment]``, ``[env]``, ``[qsr]``, ``[exploration]``,
``[tabular]``, ``[dqn]`` and ``[learner]``. Every field of
:class:`ExperimentConfig` can be set from the section it is listed under
in ``SECTIONS``; anything not given keeps its default. The environment
variable ``SAFE_EXPLORE_OUTDIR`` overrides the output directory.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

from safe_explore.envs import EnvConfig, InvalidConfig

OUTDIR_ENV = "SAFE_EXPLORE_OUTDIR"

AGENT_KINDS = ("q", "q+ge", "q+fg", "q+learnedrule", "dqn", "dqn+ge", "dqn+fg", "dqn+negreward")
VARIANTS = ("ge", "fg", "negreward", "learnedrule")


def parse_agent(kind: str) -> tuple[str, str]:
    """Split ``"dqn+fg"`` into ``("dqn", "fg")``; the vanilla variant is ``""``."""
    base, _, variant = kind.partition("+")
    if base not in ("q", "dqn") or (variant and variant not in VARIANTS):
        raise InvalidConfig(f"unknown agent kind {kind!r}")
    return base, variant


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agents: tuple[str, ...] = ("q", "q+ge", "q+fg")
    rules: str = "crossroad"
    episodes: int = 5000  # tabular agents
    dqn_episodes: int = 25_000
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    outdir: str = "runs"
    window: int = 100
    workers: int = 1
    timing: bool = False
    layout: str = "fixed"

    region_radius: int = 2
    d_close: int = 1

    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.1

    alpha: float = 0.1
    gamma: float = 0.99

    hidden: tuple[int, ...] = (64, 64)
    lr: float = 3e-4
    batch_size: int = 32
    buffer_capacity: int = 50_000
    sync_every: int = 1000
    learn_start: int = 1000
    train_every: int = 4
    value_bound: float = 1.0
    collision_penalty: float = -1.0

    learner_episodes: int = 2000
    learner_step_size: float = 0.5
    learner_epochs: int = 2000
    learner_threshold: float = 0.5

    def validate(self) -> None:
        self.env.validate()
        if not self.seeds:
            raise InvalidConfig("at least one seed is required")
        if self.episodes < 1 or self.dqn_episodes < 1:
            raise InvalidConfig("episode budgets must be >= 1")
        if self.window < 1:
            raise InvalidConfig("window must be >= 1")
        if self.layout not in ("fixed", "random"):
            raise InvalidConfig("layout must be 'fixed' or 'random'")
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise InvalidConfig("need 0 <= eps_end <= eps_start <= 1")
        for a in self.agents:
            parse_agent(a)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def with_env(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, env=self.env.replace(**changes))

    def episodes_for(self, agent: str) -> int:
        return self.episodes if parse_agent(agent)[0] == "q" else self.dqn_episodes

    @property
    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTDIR_ENV) or self.outdir)


SECTIONS = {
    "experiment": ("agents", "rules", "episodes", "dqn_episodes", "seeds", "outdir", "window", "workers", "timing", "layout"),
    "qsr": ("region_radius", "d_close"),
    "exploration": ("eps_start", "eps_end", "eps_decay_fraction"),
    "tabular": ("alpha", "gamma"),
    "dqn": (
        "hidden",
        "lr",
        "gamma",
        "batch_size",
        "buffer_capacity",
        "sync_every",
        "learn_start",
        "train_every",
        "value_bound",
        "collision_penalty",
    ),
    "learner": ("learner_episodes", "learner_step_size", "learner_epochs", "learner_threshold"),
}
ENV_KEYS = tuple(f.name for f in dataclasses.fields(EnvConfig))


def _convert(value: str, default):
    value = value.strip()
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidConfig(f"not a boolean: {value!r}")
    if isinstance(default, tuple):
        items = [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]
        if default and isinstance(default[0], int):
            return tuple(int(v) for v in items)
        if not default and value and items and all(_is_int(v) for v in items):
            return tuple(int(v) for v in items)
        return tuple(items)
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def _field_defaults(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def apply_settings(cfg: ExperimentConfig, settings: dict[str, dict[str, str]]) -> ExperimentConfig:
    """Overlay ``{section: {key: raw string}}`` onto ``cfg``."""
    changes = {}
    env_changes = {}
    defaults = _field_defaults(cfg)
    env_defaults = _field_defaults(cfg.env)
    for section, items in settings.items():
        for key, raw in items.items():
            key = key.strip().replace("-", "_")
            if section == "env":
                if key not in ENV_KEYS:
                    raise InvalidConfig(f"unknown key [env] {key}")
                env_changes[key] = _convert(raw, env_defaults[key])
                continue
            allowed = SECTIONS.get(section)
            if allowed is None:
                raise InvalidConfig(f"unknown section [{section}]")
            if key not in allowed:
                raise InvalidConfig(f"unknown key [{section}] {key}")
            changes[key] = _convert(raw, defaults[key])
    env = cfg.env.replace(**env_changes)
    if "kind" in env_changes and env.kind == "freeway" and "max_steps" not in env_changes:
        env = env.replace(max_steps=200)
    return dataclasses.replace(cfg, env=env, **changes)


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string(text)
    settings = {s: dict(parser.items(s)) for s in parser.sections()}
    cfg = apply_settings(base or ExperimentConfig(), settings)
    cfg.validate()
    return cfg


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def parse_overrides(items) -> dict[str, dict[str, str]]:
    """``["dqn.lr=0.0005", "env.max_steps=60"]`` -> ``{"dqn": {"lr": ...}, ...}``."""
    out: dict[str, dict[str, str]] = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise InvalidConfig(f"override must look like section.key=value, got {item!r}")
        out.setdefault(section.strip(), {})[name.strip()] = value
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser()

    def fmt(v):
        if isinstance(v, tuple):
            return ", ".join(str(x) for x in v)
        return str(v).lower() if isinstance(v, bool) else str(v)

    for section, keys in SECTIONS.items():
        parser[section] = {k: fmt(getattr(cfg, k)) for k in keys}
    parser["env"] = {k: fmt(getattr(cfg.env, k)) for k in ENV_KEYS}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
