"""Minimal DQN: online/target networks, replay, squared TD loss."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from safe_explore.agents import mlp
from safe_explore.agents.replay import ReplayBuffer

DQN_HEADER = "safe-explore dqn v1"


class BufferTooSmall(RuntimeError):
    pass


def featurize(obs) -> np.ndarray:
    """Fixed-length one-hot encoding of an observation.

    Layout: agent column (``width`` slots), agent row (``height`` slots),
    then for every car in observation order its column (``width`` slots)
    holding the car's direction, +1 or -1. One-hot cells keep neighbouring
    positions apart, which a small ReLU net separates far more easily than
    scaled coordinates.
    """
    w, h = obs.width, obs.height
    cars = [o for o in obs.objects if o.kind != "agent"]
    out = np.zeros(w + h + w * len(cars))
    agent = obs.agent
    if agent is not None:
        out[agent.pos[0]] = 1.0
        out[w + agent.pos[1]] = 1.0
    base = w + h
    for i, c in enumerate(cars):
        out[base + i * w + c.pos[0]] = 1.0 if c.velocity[0] >= 0 else -1.0
    return out


def decode_cells(vec: np.ndarray, width: int, height: int) -> tuple[tuple[int, int], list[int]]:
    """Inverse of :func:`featurize`: agent cell and car columns."""
    vec = np.asarray(vec)
    agent = (int(np.argmax(vec[:width])), int(np.argmax(vec[width : width + height])))
    rest = vec[width + height :].reshape(-1, width)
    cars = [int(np.argmax(np.abs(row))) for row in rest]
    return agent, cars


@dataclass
class MLPParams:
    """Online and target weights plus everything one DQN update needs."""

    online: list
    target: list
    optimizer: mlp.Adam
    sizes: tuple[int, ...]
    gamma: float = 0.99
    batch_size: int = 32
    sync_every: int = 1000
    updates: int = 0
    syncs: int = field(default=0)
    value_bound: float | None = None

    @classmethod
    def create(
        cls,
        sizes,
        rng,
        lr: float = 1e-3,
        gamma: float = 0.99,
        batch_size: int = 32,
        sync_every: int = 1000,
        zero_last: bool = False,
        value_bound: float | None = None,
    ) -> MLPParams:
        online = mlp.init_params(sizes, rng, zero_last=zero_last)
        return cls(
            online=online,
            target=mlp.copy_params(online),
            optimizer=mlp.Adam(online, lr=lr),
            sizes=tuple(sizes),
            gamma=gamma,
            batch_size=batch_size,
            sync_every=sync_every,
            value_bound=value_bound,
        )

    def q_values(self, x: np.ndarray) -> np.ndarray:
        return mlp.predict(self.online, x[None, :])[0]


def td_targets(params: MLPParams, rewards, next_states, terminals) -> np.ndarray:
    """``r + gamma * max_a' Q(s', a'; target)``, bootstrap term dropped on terminals.

    With ``value_bound`` set, the bootstrapped value is first clipped to
    ``[-bound, bound]``. When every return lies in that range the true
    action values are fixed points of the clip, so only estimation error
    is cut off; without it, maximising over noisy estimates lets values
    creep past anything the task can pay out.
    """
    q_next = mlp.predict(params.target, next_states).max(axis=1)
    if params.value_bound is not None:
        q_next = np.clip(q_next, -params.value_bound, params.value_bound)
    return rewards + params.gamma * (1.0 - terminals) * q_next


def td_loss_and_grads(params: MLPParams, states, actions, targets):
    """Mean squared TD error over the batch and its gradient w.r.t. the online net."""
    q, acts = mlp.forward(params.online, states)
    rows = np.arange(len(actions))
    td = q[rows, actions] - targets
    loss = float(np.mean(td * td))
    d_out = np.zeros_like(q)
    d_out[rows, actions] = 2.0 * td / len(actions)
    return loss, mlp.backward(params.online, acts, d_out)


def target_sync(params: MLPParams) -> MLPParams:
    params.target = mlp.copy_params(params.online)
    params.syncs += 1
    return params


def dqn_train_step(params: MLPParams, buffer: ReplayBuffer, rng) -> float:
    """Sample a minibatch, take one Adam step on the online net, return its loss.

    The target network is left alone; :class:`DQNLearner` syncs it every
    ``params.sync_every`` updates.
    """
    if len(buffer) < params.batch_size:
        raise BufferTooSmall(f"buffer holds {len(buffer)} < batch size {params.batch_size}")
    s, a, r, s2, term = buffer.sample(params.batch_size, rng)
    targets = td_targets(params, r, s2, term)
    loss, grads = td_loss_and_grads(params, s, a, targets)
    params.optimizer.step(params.online, grads)
    params.updates += 1
    return loss


class DQNLearner:
    """Glue between the training loop and the network: replay, update cadence, sync.

    One gradient step every ``train_every`` environment steps once
    ``learn_start`` transitions are stored; the target network is synced
    after every ``sync_every`` gradient steps.
    """

    def __init__(
        self,
        state_dim: int,
        n_actions: int,
        rng,
        hidden=(64, 64),
        lr: float = 1e-3,
        gamma: float = 0.99,
        batch_size: int = 32,
        buffer_capacity: int = 50_000,
        sync_every: int = 1000,
        learn_start: int = 1000,
        train_every: int = 1,
        value_bound: float | None = None,
    ):
        sizes = (state_dim, *hidden, n_actions)
        self.params = MLPParams.create(
            sizes, rng, lr, gamma, batch_size, sync_every, zero_last=True, value_bound=value_bound
        )
        self.buffer = ReplayBuffer(buffer_capacity, state_dim)
        self.rng = rng
        self.learn_start = max(learn_start, batch_size)
        self.train_every = train_every
        self.steps = 0
        self.last_loss = float("nan")

    def q_values(self, x: np.ndarray) -> np.ndarray:
        return self.params.q_values(x)

    def observe(self, s, a: int, r: float, s2, terminal: bool) -> None:
        self.buffer.add(s, a, r, s2, terminal)
        self.steps += 1
        if len(self.buffer) >= self.learn_start and self.steps % self.train_every == 0:
            self.last_loss = dqn_train_step(self.params, self.buffer, self.rng)
            if self.params.updates % self.params.sync_every == 0:
                target_sync(self.params)


def save_params(params: MLPParams, path: str | Path) -> None:
    """Header line, then one JSON object with sizes, settings and both weight sets."""
    payload = {
        "sizes": list(params.sizes),
        "gamma": params.gamma,
        "batch_size": params.batch_size,
        "sync_every": params.sync_every,
        "updates": params.updates,
        "value_bound": params.value_bound,
        "online": [p.tolist() for p in params.online],
        "target": [p.tolist() for p in params.target],
    }
    Path(path).write_text(DQN_HEADER + "\n" + json.dumps(payload) + "\n", encoding="utf-8")


def load_params(path: str | Path, lr: float = 1e-3) -> MLPParams:
    header, body = Path(path).read_text(encoding="utf-8").split("\n", 1)
    if header.strip() != DQN_HEADER:
        raise ValueError(f"not a DQN checkpoint (header {header!r})")
    d = json.loads(body)
    online = mlp.init_params(d["sizes"], np.random.default_rng(0))
    for p, saved in zip(online, d["online"]):
        p[...] = np.array(saved, dtype=float)
    return MLPParams(
        online=online,
        target=[np.array(p, dtype=float) for p in d["target"]],
        optimizer=mlp.Adam(online, lr=lr),
        sizes=tuple(d["sizes"]),
        gamma=d["gamma"],
        batch_size=d["batch_size"],
        sync_every=d["sync_every"],
        updates=d["updates"],
        value_bound=d.get("value_bound"),
    )
