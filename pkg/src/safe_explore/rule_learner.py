"""Learning a safety check from experience instead of writing rules by hand.

Random play produces symbolic states labelled by whether the step that
produced them was a collision. A logistic regression over binary
relation indicators then scores how likely a state is to be a crash, and
:class:`LearnedShield` uses the environment's forward model to score the
successor of every candidate action.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from safe_explore.qsr import DIRECTION_PREDICATES, DISTANCE_PREDICATES, TYPE_PREDICATE, extract_relations

MODEL_HEADER = "safe-explore logistic v1"

SAFE, UNSAFE = 0, 1


class DegenerateData(UserWarning):
    pass


class FeatureVocabulary:
    """Fixed ordering of (direction, distance, object type) indicators."""

    def __init__(self, object_types: Sequence[str] = ("car",)):
        self.object_types = tuple(object_types)
        self.names = [
            f"{d}&{c}&{t}" for t in self.object_types for d in DIRECTION_PREDICATES for c in DISTANCE_PREDICATES
        ]
        self.index = {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def encode(self, relations) -> np.ndarray:
        per_obj: dict[str, dict[str, str]] = {}
        for rel in relations:
            if rel.predicate == TYPE_PREDICATE:
                per_obj.setdefault(rel.subject, {})["type"] = rel.object
            elif rel.predicate in DIRECTION_PREDICATES:
                per_obj.setdefault(rel.object, {})["dir"] = rel.predicate
            elif rel.predicate in DISTANCE_PREDICATES:
                per_obj.setdefault(rel.object, {})["dist"] = rel.predicate
        x = np.zeros(len(self.names))
        for facts in per_obj.values():
            i = self.index.get(f"{facts.get('dir')}&{facts.get('dist')}&{facts.get('type')}")
            if i is not None:
                x[i] = 1.0
        return x


class LabeledExample(NamedTuple):
    features: np.ndarray
    label: int


def as_arrays(data: Sequence[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([d.features for d in data], dtype=float)
    y = np.array([d.label for d in data], dtype=float)
    return X, y


def collect_dataset(
    env,
    n_episodes: int,
    rng,
    region_radius: int = 2,
    d_close: int = 1,
    vocab: FeatureVocabulary | None = None,
    fixed_layout: bool = False,
) -> list[LabeledExample]:
    """Label the states reached by uniformly random play.

    Every visited state is encoded; it is ``UNSAFE`` iff the step that
    produced it was a collision (the start state of an episode is safe).
    Layouts are re-drawn from ``rng`` each episode unless ``fixed_layout``.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    vocab = vocab or FeatureVocabulary()
    data = []
    n_actions = len(env.actions)
    for _ in range(n_episodes):
        seed = None if fixed_layout else int(rng.integers(2**31))
        obs = env.reset(seed=seed)
        data.append(LabeledExample(vocab.encode(extract_relations(obs, region_radius, d_close)), SAFE))
        done = False
        while not done:
            action = env.actions[int(rng.integers(n_actions))]
            res = env.step(action)
            label = UNSAFE if res.collided else SAFE
            data.append(LabeledExample(vocab.encode(extract_relations(res.obs, region_radius, d_close)), label))
            done = res.done
    return data


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    threshold: float = 0.5
    degenerate: bool = False
    feature_names: list[str] = field(default_factory=list)
    loss_history: list[float] = field(default_factory=list, repr=False)

    def logit(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Probability of the unsafe class."""
        z = self.logit(np.asarray(X, dtype=float))
        return np.exp(-np.logaddexp(0.0, -z))

    def predict(self, X: np.ndarray) -> np.ndarray:
        """1 (unsafe) only when the probability strictly exceeds the threshold."""
        return (self.predict_proba(X) > self.threshold).astype(int)


def cross_entropy(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray) -> float:
    z = X @ w + b
    # log(1 + e^z) - y z, the stable form of the binary cross-entropy
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def cross_entropy_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    z = X @ w + b
    p = np.exp(-np.logaddexp(0.0, -z))
    err = (p - y) / len(y)
    return X.T @ err, float(err.sum())


def train_logistic(
    data: Sequence[LabeledExample] | tuple[np.ndarray, np.ndarray],
    step_size: float = 0.5,
    epochs: int = 2000,
    threshold: float = 0.5,
    feature_names: Sequence[str] = (),
) -> LogisticModel:
    """Full-batch gradient descent on the mean cross-entropy, from zero weights."""
    X, y = data if isinstance(data, tuple) else as_arrays(data)
    if len(y) == 0:
        raise ValueError("no training data")
    classes = np.unique(y)
    if len(classes) == 1:
        warnings.warn("training data holds a single class; returning a constant classifier", DegenerateData)
        const = int(classes[0])
        return LogisticModel(
            np.zeros(X.shape[1]),
            30.0 if const == UNSAFE else -30.0,
            threshold,
            degenerate=True,
            feature_names=list(feature_names),
        )
    w = np.zeros(X.shape[1])
    b = 0.0
    history = [cross_entropy(w, b, X, y)]
    for _ in range(epochs):
        gw, gb = cross_entropy_grad(w, b, X, y)
        w -= step_size * gw
        b -= step_size * gb
        history.append(cross_entropy(w, b, X, y))
    return LogisticModel(w, b, threshold, feature_names=list(feature_names), loss_history=history)


def accuracy(model: LogisticModel, data) -> float:
    X, y = data if isinstance(data, tuple) else as_arrays(data)
    return float(np.mean(model.predict(X) == y))


def learned_is_action_safe(
    model: LogisticModel,
    forward_model,
    obs,
    action: str,
    vocab: FeatureVocabulary | None = None,
    region_radius: int = 2,
    d_close: int = 1,
) -> bool:
    """Safe unless the predicted successor scores strictly above the threshold.

    A model with no evidence either way (probability exactly at the
    threshold) therefore does not block the action.
    """
    vocab = vocab or FeatureVocabulary()
    nxt, _ = forward_model(obs, action)
    x = vocab.encode(extract_relations(nxt, region_radius, d_close))
    return bool(model.predict(x[None, :])[0] == 0)


class LearnedShield:
    """Drop-in replacement for the rule shield backed by a trained classifier."""

    def __init__(
        self,
        model: LogisticModel,
        forward_model,
        actions: Sequence[str],
        region_radius: int = 2,
        d_close: int = 1,
        vocab: FeatureVocabulary | None = None,
    ):
        self.model = model
        self.forward_model = forward_model
        self.actions = tuple(actions)
        self.region_radius = region_radius
        self.d_close = d_close
        self.vocab = vocab or FeatureVocabulary()
        self._cache: dict = {}

    def safe_mask(self, obs) -> tuple[bool, ...]:
        key = obs.key()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        X = np.array(
            [
                self.vocab.encode(extract_relations(self.forward_model(obs, a)[0], self.region_radius, self.d_close))
                for a in self.actions
            ]
        )
        mask = tuple(bool(u == 0) for u in self.model.predict(X))
        self._cache[key] = mask
        return mask

    def is_action_safe(self, obs, action: str) -> bool:
        return self.safe_mask(obs)[self.actions.index(action)]

    def safe_actions(self, obs) -> list[str]:
        return [a for a, ok in zip(self.actions, self.safe_mask(obs)) if ok]


def sample_states(env, n_episodes: int, rng) -> list:
    """Every state visited by uniformly random play on freshly drawn layouts."""
    states = []
    for _ in range(n_episodes):
        obs = env.reset(seed=int(rng.integers(2**31)))
        done = False
        while not done:
            states.append(obs)
            res = env.step(env.actions[int(rng.integers(len(env.actions)))])
            obs, done = res.obs, res.done
    return states


class Agreement(NamedTuple):
    rate: float
    n_pairs: int
    learned_only_safe: int  # learned says safe, reference says unsafe
    reference_only_safe: int


def shield_agreement(learned, reference, states: Sequence, actions: Sequence[str], n_pairs: int, rng) -> Agreement:
    """How often two safety checks agree on uniformly drawn (state, action) pairs."""
    if not states:
        raise ValueError("no states to sample from")
    agree = learned_only = reference_only = 0
    for _ in range(n_pairs):
        obs = states[int(rng.integers(len(states)))]
        a = int(rng.integers(len(actions)))
        mine = learned.safe_mask(obs)[a]
        ref = reference.safe_mask(obs)[a]
        if mine == ref:
            agree += 1
        elif mine:
            learned_only += 1
        else:
            reference_only += 1
    return Agreement(agree / n_pairs, n_pairs, learned_only, reference_only)


def save_model(model: LogisticModel, path: str | Path) -> None:
    lines = [
        MODEL_HEADER,
        f"threshold {model.threshold!r}",
        f"bias {model.bias!r}",
        f"degenerate {int(model.degenerate)}",
    ]
    names = model.feature_names or [f"x{i}" for i in range(len(model.weights))]
    lines += [f"w {name} {float(w)!r}" for name, w in zip(names, model.weights)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> LogisticModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise ValueError("not a logistic model file")
    fields = {}
    names, weights = [], []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] == "w":
            names.append(parts[1])
            weights.append(float(parts[2]))
        else:
            fields[parts[0]] = parts[1]
    return LogisticModel(
        np.array(weights),
        float(fields["bias"]),
        float(fields["threshold"]),
        degenerate=bool(int(fields.get("degenerate", "0"))),
        feature_names=names,
    )
