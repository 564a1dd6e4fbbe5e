"""Per-episode records and the summary statistics computed from them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

CSV_HEADER = ("episode", "reward", "steps", "deaths", "overrides", "ms")
NEVER = None


class BasePerfectlySafe(ZeroDivisionError):
    """The reference agent never died, so relative deaths are undefined."""


@dataclass
class EpisodeMetrics:
    episode: int
    reward: float
    steps: int
    deaths: int
    overrides: int
    ms: float = 0.0

    def row(self) -> list[str]:
        return [
            str(self.episode),
            f"{self.reward:.10g}",
            str(self.steps),
            str(self.deaths),
            str(self.overrides),
            f"{self.ms:.3f}",
        ]


def write_csv(path: str | Path, metrics: Sequence[EpisodeMetrics]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for m in metrics:
            w.writerow(m.row())


def read_csv(path: str | Path) -> list[EpisodeMetrics]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [
            EpisodeMetrics(int(r[0]), float(r[1]), int(r[2]), int(r[3]), int(r[4]), float(r[5]))
            for r in reader
        ]


def rewards_of(metrics: Sequence[EpisodeMetrics]) -> np.ndarray:
    return np.array([m.reward for m in metrics], dtype=float)


def deaths_of(metrics: Sequence[EpisodeMetrics]) -> int:
    return int(sum(m.deaths for m in metrics))


def smooth(rewards, window: int) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` points average what exists."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(rewards, dtype=float)
    if len(x) == 0:
        return x
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


@dataclass
class Curve:
    values: np.ndarray
    n_seeds: np.ndarray
    span: np.ndarray  # episodes inside the trailing window at each point

    def __len__(self) -> int:
        return len(self.values)


def learning_curve(runs, window: int) -> Curve:
    """Smoothed reward curve averaged across seeds.

    ``runs`` is one reward sequence (or metrics list) or a list of them;
    shorter runs simply stop contributing once they end.
    """
    if len(runs) and isinstance(runs[0], (EpisodeMetrics, int, float, np.floating, np.integer)):
        runs = [runs]
    series = [smooth(r if not isinstance(r[0], EpisodeMetrics) else rewards_of(r), window) for r in runs if len(r)]
    n = max((len(s) for s in series), default=0)
    total = np.zeros(n)
    count = np.zeros(n, dtype=int)
    for s in series:
        total[: len(s)] += s
        count[: len(s)] += 1
    span = np.minimum(np.arange(1, n + 1), window)
    return Curve(total / np.maximum(count, 1), count, span)


def max_smoothed(rewards, window: int, full_windows: bool = True) -> float:
    """Best smoothed reward; by default only points backed by a full window count."""
    s = smooth(rewards, window)
    if full_windows and len(s) >= window:
        s = s[window - 1 :]
    return float(s.max())


def final_smoothed(rewards, window: int) -> float:
    return float(smooth(rewards, window)[-1])


def first_max_episode(rewards, window: int) -> int:
    s = smooth(rewards, window)
    return int(np.flatnonzero(s >= s.max())[0])


def episodes_to_baseline(base_rewards, agent_rewards, window: int) -> int | None:
    """First episode where the agent's smoothed reward reaches the base's best.

    Returns ``NEVER`` (None) if the agent never gets there.
    """
    target = smooth(base_rewards, window).max()
    hits = np.flatnonzero(smooth(agent_rewards, window) >= target)
    return int(hits[0]) if len(hits) else NEVER


def relative_deaths(base_deaths: int, others: Mapping[str, int]) -> dict[str, float]:
    if base_deaths == 0:
        raise BasePerfectlySafe("base perfectly safe: no deaths to compare against")
    return {name: d / base_deaths for name, d in others.items()}


def shaping_verdict(final_rewards: Mapping[str, float], shaped: str = "dqn+negreward", safe=("dqn+ge", "dqn+fg")) -> bool:
    """True when the reward-shaped agent ends strictly below every safe agent."""
    return final_rewards[shaped] < min(final_rewards[a] for a in safe)
