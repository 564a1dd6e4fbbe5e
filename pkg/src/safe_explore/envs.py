"""Deterministic grid-world road-crossing environments.

Two variants share one dynamics core:

* ``crossroad``: five actions, collision ends the episode with -1, reaching
  the top row ends it with +1.
* ``freeway``: up/down/noop only, collisions knock the agent back to the
  start cell, every completed crossing pays +1 and the episode only ends on
  the step limit.

Within a step the agent moves first, then every car advances one step.
On a wrapping road (the default) both cars and the agent wrap around the
left and right edges; vertical moves are clamped to the grid. A collision is either an overlap after both moves
or an agent/car swap of cells. On a swap the agent is reported in its
starting cell (it cannot pass through the car), so every collision leaves
the agent sharing a cell with a car in the resulting observation.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from safe_explore.qsr import AGENT_ID, GridPoint

CROSSROAD_ACTIONS = ("up", "down", "left", "right", "stay")
FREEWAY_ACTIONS = ("up", "down", "noop")

_MOVES = {
    "up": (0, -1),
    "down": (0, 1),
    "left": (-1, 0),
    "right": (1, 0),
    "stay": (0, 0),
    "noop": (0, 0),
}


class InvalidConfig(ValueError):
    pass


class EpisodeFinished(RuntimeError):
    pass


def _alternating(n: int) -> tuple[int, ...]:
    return tuple(1 if i % 2 == 0 else -1 for i in range(n))


@dataclass(frozen=True)
class EnvConfig:
    kind: str = "crossroad"
    width: int = 9
    height: int = 9
    car_rows: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7)
    car_directions: tuple[int, ...] = _alternating(7)
    car_speed: int = 1
    max_steps: int = 50
    reward_mode: str = "default"
    seed: int = 0
    wrap: bool = True

    def validate(self) -> None:
        if self.kind not in ("crossroad", "freeway"):
            raise InvalidConfig(f"unknown environment kind {self.kind!r}")
        if self.width < 1 or self.height < 3:
            raise InvalidConfig("grid must be at least 1 wide and 3 high")
        if self.max_steps < 1:
            raise InvalidConfig("max_steps must be >= 1")
        if self.reward_mode not in ("default", "zero_one"):
            raise InvalidConfig(f"unknown reward_mode {self.reward_mode!r}")
        if len(self.car_rows) != len(self.car_directions):
            raise InvalidConfig("car_rows and car_directions differ in length")
        if len(set(self.car_rows)) != len(self.car_rows):
            raise InvalidConfig("at most one car per row")
        for row in self.car_rows:
            if not 0 < row < self.height - 1:
                raise InvalidConfig(f"car row {row} must lie strictly between goal and start rows")
        for d in self.car_directions:
            if d not in (-1, 1):
                raise InvalidConfig("car directions must be -1 or +1")
        if self.car_speed < 0:
            raise InvalidConfig("car_speed must be >= 0")

    @property
    def actions(self) -> tuple[str, ...]:
        return CROSSROAD_ACTIONS if self.kind == "crossroad" else FREEWAY_ACTIONS

    @property
    def start(self) -> GridPoint:
        return GridPoint(self.width // 2, self.height - 1)

    def replace(self, **changes) -> EnvConfig:
        return dataclasses.replace(self, **changes)


class GameObject(NamedTuple):
    id: str
    kind: str
    pos: GridPoint
    velocity: tuple[int, int]


@dataclass(frozen=True)
class EnvObservation:
    objects: tuple[GameObject, ...]
    step_index: int
    width: int
    height: int
    wrap: bool = True
    _key: tuple = field(default=None, init=False, repr=False, compare=False)

    @property
    def agent(self) -> GameObject | None:
        for obj in self.objects:
            if obj.kind == "agent":
                return obj
        return None

    @property
    def cars(self) -> tuple[GameObject, ...]:
        return tuple(o for o in self.objects if o.kind == "car")

    def key(self) -> tuple:
        """Hashable serialisation of the grid: every object's cell and velocity."""
        k = self._key
        if k is None:
            k = tuple((o.pos[0], o.pos[1], o.velocity[0]) for o in self.objects)
            object.__setattr__(self, "_key", k)
        return k

    def render(self) -> str:
        grid = [["." for _ in range(self.width)] for _ in range(self.height)]
        for o in self.objects:
            if o.kind == "car":
                grid[o.pos[1]][o.pos[0]] = ">" if o.velocity[0] > 0 else "<"
        a = self.agent
        if a is not None:
            x, y = a.pos
            grid[y][x] = "X" if grid[y][x] != "." else "A"
        return "\n".join("".join(row) for row in grid)


class StepResult(NamedTuple):
    obs: EnvObservation
    reward: float
    done: bool
    collided: bool


def _advance(config: EnvConfig, obs: EnvObservation, action: str):
    """Shared transition core; returns (next objects, collided, reached_goal)."""
    try:
        mx, my = _MOVES[action]
    except KeyError:
        raise ValueError(f"unknown action {action!r}") from None
    if action not in config.actions:
        raise ValueError(f"action {action!r} not available in {config.kind}")
    agent = obs.agent
    ax, ay = agent.pos
    if config.wrap:
        # the road is a ring for the agent too: an edge never turns a move into a wait
        nx = (ax + mx) % config.width
    else:
        nx = min(max(ax + mx, 0), config.width - 1)
    ny = min(max(ay + my, 0), config.height - 1)

    collided = False
    moved = []
    for o in obs.objects:
        if o.kind == "agent":
            continue
        ox, oy = o.pos
        cx = ox + o.velocity[0]
        if config.wrap:
            cx %= config.width
        else:
            cx = min(max(cx, 0), config.width - 1)
        cy = oy + o.velocity[1]
        if (cx, cy) == (nx, ny):
            collided = True
        elif (cx, cy) == (ax, ay) and (ox, oy) == (nx, ny) and (nx, ny) != (ax, ay):
            collided = True
            # blocked by the car: the agent never leaves its cell
            nx, ny = ax, ay
        moved.append(o._replace(pos=GridPoint(cx, cy)))
    reached = ny == 0 and not collided
    return GridPoint(nx, ny), moved, collided, reached


def _build(obs: EnvObservation, agent_pos: GridPoint, cars: list, step_index: int) -> EnvObservation:
    agent = obs.agent._replace(pos=agent_pos)
    return EnvObservation(
        objects=(agent, *cars),
        step_index=step_index,
        width=obs.width,
        height=obs.height,
        wrap=obs.wrap,
    )


def forward_model(config: EnvConfig, obs: EnvObservation, action: str) -> tuple[EnvObservation, bool]:
    """Predict the next observation of ``obs`` under ``action`` without side effects."""
    agent_pos, cars, collided, reached = _advance(config, obs, action)
    if config.kind == "freeway" and (collided or reached):
        agent_pos = config.start
    return _build(obs, agent_pos, cars, obs.step_index + 1), collided


class GridRoadEnv:
    """Episodic environment with a gym-like ``reset``/``step`` interface."""

    def __init__(self, config: EnvConfig | None = None):
        config = config or EnvConfig()
        config.validate()
        self.config = config
        self.actions = config.actions
        self._obs: EnvObservation | None = None
        self._done = True

    @property
    def observation(self) -> EnvObservation | None:
        return self._obs

    @property
    def done(self) -> bool:
        return self._done

    def reset(self, seed: int | None = None) -> EnvObservation:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        cols = rng.integers(0, cfg.width, size=len(cfg.car_rows))
        objects = [GameObject(AGENT_ID, "agent", cfg.start, (0, 0))]
        for i, (row, d) in enumerate(zip(cfg.car_rows, cfg.car_directions)):
            objects.append(
                GameObject(f"car{i + 1}", "car", GridPoint(int(cols[i]), row), (d * cfg.car_speed, 0))
            )
        self._obs = EnvObservation(tuple(objects), 0, cfg.width, cfg.height, cfg.wrap)
        self._done = False
        return self._obs

    def set_state(self, obs: EnvObservation) -> None:
        """Start an episode from an arbitrary well-formed observation."""
        self._obs = obs
        self._done = False

    def forward_model(self, obs: EnvObservation, action: str) -> tuple[EnvObservation, bool]:
        return forward_model(self.config, obs, action)

    def terminal(self, result: StepResult) -> bool:
        """True when the episode ended for a reason other than the step limit."""
        if self.config.kind != "crossroad":
            return False
        return result.collided or result.obs.agent.pos[1] == 0

    def step(self, action: str) -> StepResult:
        if self._done or self._obs is None:
            raise EpisodeFinished("step() called on a finished episode; call reset()")
        cfg = self.config
        agent_pos, cars, collided, reached = _advance(cfg, self._obs, action)
        t = self._obs.step_index + 1
        if cfg.kind == "crossroad":
            if collided:
                reward = -1.0 if cfg.reward_mode == "default" else 0.0
                done = True
            elif reached:
                reward, done = 1.0, True
            else:
                reward, done = 0.0, False
        else:
            reward = 1.0 if reached else 0.0
            if collided or reached:
                agent_pos = cfg.start
            done = False
        if t >= cfg.max_steps:
            done = True
        self._obs = _build(self._obs, agent_pos, cars, t)
        self._done = done
        return StepResult(self._obs, reward, done, collided)


def make_env(config: EnvConfig | None = None) -> GridRoadEnv:
    return GridRoadEnv(config)


def crossroad(**overrides) -> GridRoadEnv:
    return GridRoadEnv(EnvConfig(kind="crossroad", **overrides))


def freeway_grid(**overrides) -> GridRoadEnv:
    overrides.setdefault("max_steps", 200)
    return GridRoadEnv(EnvConfig(kind="freeway", **overrides))
