"""Tabular Q-learning over serialised grid states."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Hashable, NamedTuple

import numpy as np

QTABLE_HEADER = "safe-explore qtable v1"


class Experience(NamedTuple):
    state: object
    action: int
    reward: float
    next_state: object
    terminal: bool


class QTable:
    """Action values keyed by a hashable state; unseen entries read as zero."""

    def __init__(self, n_actions: int, alpha: float = 0.1, gamma: float = 0.99):
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        self.n_actions = n_actions
        self.alpha = alpha
        self.gamma = gamma
        self.table: dict[Hashable, np.ndarray] = {}
        self.visits: dict[tuple, int] = {}

    def __len__(self) -> int:
        return len(self.table)

    def values(self, state: Hashable) -> np.ndarray:
        v = self.table.get(state)
        if v is None:
            return np.zeros(self.n_actions)
        return v

    def __getitem__(self, item: tuple[Hashable, int]) -> float:
        state, action = item
        return float(self.values(state)[action])

    def __setitem__(self, item: tuple[Hashable, int], value: float) -> None:
        state, action = item
        row = self.table.get(state)
        if row is None:
            row = self.table[state] = np.zeros(self.n_actions)
        row[action] = value


def q_update(table: QTable, e: Experience, alpha: float | None = None) -> float:
    """One-step Q-learning backup of a single transition; returns the TD error.

    Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') * (1 - terminal) - Q(s,a))
    """
    alpha = table.alpha if alpha is None else alpha
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    bootstrap = 0.0 if e.terminal else table.gamma * float(table.values(e.next_state).max())
    current = table[e.state, e.action]
    td = e.reward + bootstrap - current
    if alpha:
        table[e.state, e.action] = current + alpha * td
    key = (e.state, e.action)
    table.visits[key] = table.visits.get(key, 0) + 1
    return td


def save_qtable(table: QTable, path: str | Path) -> None:
    """Text dump: a header line, a JSON settings line, then one JSON row per state."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(QTABLE_HEADER + "\n")
        fh.write(json.dumps({"n_actions": table.n_actions, "alpha": table.alpha, "gamma": table.gamma}) + "\n")
        for state, row in table.table.items():
            fh.write(json.dumps([state, row.tolist()]) + "\n")


def _freeze(x):
    if isinstance(x, list):
        return tuple(_freeze(v) for v in x)
    return x


def load_qtable(path: str | Path) -> QTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != QTABLE_HEADER:
            raise ValueError(f"not a Q-table file (header {header!r})")
        meta = json.loads(fh.readline())
        table = QTable(meta["n_actions"], meta["alpha"], meta["gamma"])
        for line in fh:
            state, row = json.loads(line)
            table.table[_freeze(state)] = np.array(row, dtype=float)
    return table
