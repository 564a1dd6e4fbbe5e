"""Action selection: plain epsilon-greedy and its two shielded variants.

A *shield* is any object exposing ``safe_mask(obs)`` (one bool per action,
in the agent's action order). Both the rule engine and the learned
classifier provide one, so the policies do not care which is in use.

Every policy draws ``n ~ U[0, 1)`` first and explores iff ``n < eps``.
Exploration and argmax tie-breaking consume the same caller-owned stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

VANILLA = "eg"
GUIDED = "ge"
FULL = "fg"


class Choice(NamedTuple):
    index: int
    overridden: bool
    explored: bool


@dataclass
class EpsilonSchedule:
    """Linear decay from ``start`` to ``end`` over ``horizon`` ticks, then flat."""

    start: float = 1.0
    end: float = 0.05
    horizon: int = 1000
    t: int = 0

    def __post_init__(self):
        if not 0.0 <= self.end <= self.start <= 1.0:
            raise ValueError("need 0 <= end <= start <= 1")

    @property
    def value(self) -> float:
        if self.horizon <= 0 or self.t >= self.horizon:
            return self.end
        frac = self.t / self.horizon
        return self.start + frac * (self.end - self.start)

    def tick(self) -> float:
        self.t += 1
        return self.value


def greedy_index(q_values: np.ndarray, rng) -> int:
    q = np.asarray(q_values)
    best = np.flatnonzero(q == q.max())
    if len(best) == 1:
        return int(best[0])
    return int(best[rng.integers(len(best))])


def random_safe_index(mask: Sequence[bool], rng) -> tuple[int, bool]:
    """Uniform over safe indices, or over all of them if none is safe.

    The flag is True when the shield actually narrowed the choice.
    """
    safe = [i for i, ok in enumerate(mask) if ok]
    if not safe or len(safe) == len(mask):
        return int(rng.integers(len(mask))), False
    return safe[int(rng.integers(len(safe)))], True


def select(q_values, obs, eps: float, shield, rng, mode: str = VANILLA) -> Choice:
    """One safe-epsilon-greedy decision.

    ``mode`` is ``"eg"`` (no shield), ``"ge"`` (shield the random branch
    only) or ``"fg"`` (also replace an unsafe greedy action).
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {eps}")
    n_actions = len(q_values)
    if rng.random() < eps:
        if mode == VANILLA or shield is None:
            return Choice(int(rng.integers(n_actions)), False, True)
        idx, narrowed = random_safe_index(shield.safe_mask(obs), rng)
        return Choice(idx, narrowed, True)
    idx = greedy_index(q_values, rng)
    if mode == FULL and shield is not None:
        mask = shield.safe_mask(obs)
        if not mask[idx]:
            new, _ = random_safe_index(mask, rng)
            # with no safe action at all the fallback may keep an unsafe one
            return Choice(new, any(mask), False)
    return Choice(idx, False, False)


def epsilon_greedy(q_values, eps: float, rng) -> int:
    return select(q_values, None, eps, None, rng, VANILLA).index


def guided_exploration_policy(q_values, obs, eps: float, shield, rng) -> int:
    return select(q_values, obs, eps, shield, rng, GUIDED).index


def full_guidance_policy(q_values, obs, eps: float, shield, rng) -> int:
    return select(q_values, obs, eps, shield, rng, FULL).index
