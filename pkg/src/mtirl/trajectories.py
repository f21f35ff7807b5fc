"""Demonstration trajectories: sampling, feature counting and persistence.

Dataset files are JSON lines. The first line is a header
``{"type": "header", "horizon": T, "num_features": K, "num_states": S,
"num_actions": A, "true_weights": [...] | null, "generator": {...}}``;
each following line is one trajectory ``{"states": [...], "actions": [...],
"label": int | null}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, InvalidArgument
from .mdp_core import FeatureMap, Mdp, Policy, boltzmann_policy, greedy_policy, value_iteration


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64).reshape(-1)
        a = np.asarray(self.actions, dtype=np.int64).reshape(-1)
        if s.shape != a.shape:
            raise InvalidArgument("states and actions must have equal length")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    def __len__(self) -> int:
        return len(self.states)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Trajectory) and np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions))

    def __add__(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(np.concatenate([self.states, other.states]),
                          np.concatenate([self.actions, other.actions]))

    def validate(self, mdp: Mdp) -> None:
        if len(self) != mdp.horizon:
            raise InvalidArgument(f"trajectory length {len(self)} != horizon {mdp.horizon}")
        if np.any((self.states < 0) | (self.states >= mdp.num_states)) or np.any(
                (self.actions < 0) | (self.actions >= mdp.num_actions)):
            raise InvalidArgument("state or action index out of range")
        if len(self) > 1:
            p = mdp.transition[self.states[:-1], self.actions[:-1], self.states[1:]]
            if np.any(p <= 0):
                t = int(np.argmax(p <= 0))
                raise InvalidArgument(f"impossible transition at step {t}")


@dataclass(eq=False)
class Dataset:
    trajectories: list
    true_labels: Optional[np.ndarray] = None
    true_weights: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
            if len(self.true_labels) != len(self.trajectories):
                raise InvalidArgument("true_labels must match the number of trajectories")
        if self.true_weights is not None:
            self.true_weights = np.atleast_2d(np.asarray(self.true_weights, dtype=float))

    def __len__(self) -> int:
        return len(self.trajectories)

    def __eq__(self, other) -> bool:
        def same(a, b):
            return (a is None and b is None) or (
                a is not None and b is not None and np.array_equal(a, b))
        return (isinstance(other, Dataset) and len(self) == len(other)
                and all(x == y for x, y in zip(self.trajectories, other.trajectories))
                and same(self.true_labels, other.true_labels)
                and same(self.true_weights, other.true_weights)
                and self.meta == other.meta)

    @property
    def horizon(self) -> int:
        return len(self.trajectories[0]) if self.trajectories else 0

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.true_labels is None else self.true_labels[idx]
        return Dataset([self.trajectories[i] for i in idx], labels, self.true_weights, dict(self.meta))

    def start_states(self) -> np.ndarray:
        return np.array([y.states[0] for y in self.trajectories], dtype=np.int64)


def feature_counts(y: Trajectory, features: FeatureMap) -> np.ndarray:
    """Per-feature activation counts summed along the trajectory."""
    if len(y) == 0:
        return np.zeros(features.num_features)
    return features.values[y.states, y.actions].sum(axis=0)


def count_matrix(dataset: Dataset, features: FeatureMap) -> np.ndarray:
    """``(N, K)`` matrix of feature counts."""
    if len(dataset) == 0:
        return np.zeros((0, features.num_features))
    S = np.stack([y.states for y in dataset.trajectories])
    A = np.stack([y.actions for y in dataset.trajectories])
    return features.values[S, A].sum(axis=1)


def empirical_start_dist(dataset: Dataset, num_states: int, weights=None) -> np.ndarray:
    """Start-state histogram, optionally weighted per trajectory."""
    w = np.ones(len(dataset)) if weights is None else np.asarray(weights, dtype=float)
    p = np.bincount(dataset.start_states(), weights=w, minlength=num_states).astype(float)
    total = p.sum()
    return p / total if total > 0 else np.full(num_states, 1.0 / num_states)


def empirical_cluster_feature_expectation(counts: np.ndarray, v: np.ndarray, d: int) -> np.ndarray:
    """(1/N) sum_i v[d, i] * counts[i]: the cluster's share of the empirical feature counts.

    ``counts`` is the ``(N, K)`` output of :func:`count_matrix`; ``v`` is ``(D, N)``.
    """
    counts = np.asarray(counts, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v[d] < 0) or np.any(v[d] > 1):
        raise InvalidArgument("assignment weights must lie in [0, 1]")
    return v[d] @ counts / counts.shape[0]


def sample_trajectory(mdp: Mdp, policy: Policy, rng_seed=None) -> Trajectory:
    """Roll out ``policy`` for ``mdp.horizon`` steps. Same seed, same trajectory."""
    rng = np.random.default_rng(rng_seed)
    T = mdp.horizon
    pi_cdf = np.cumsum(policy.action_probs, axis=1)
    states = np.empty(T, dtype=np.int64)
    actions = np.empty(T, dtype=np.int64)
    u = rng.random(2 * T + 1)
    s = _draw(np.cumsum(mdp.start_dist), u[0])
    for t in range(T):
        a = _draw(pi_cdf[s], u[2 * t + 1])
        states[t], actions[t] = s, a
        if t + 1 < T:
            if mdp.next_state is not None:
                s = int(mdp.next_state[s, a])
            else:
                s = _draw(np.cumsum(mdp.transition[s, a]), u[2 * t + 2])
    return Trajectory(states, actions)


def _draw(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), len(cdf) - 1)


def expert_policy(mdp: Mdp, features: FeatureMap, theta, kind: str = "boltzmann",
                  beta: float = 50.0) -> Policy:
    _, Q = value_iteration(mdp, features, theta)
    if kind == "greedy":
        return greedy_policy(Q)
    if kind == "boltzmann":
        return boltzmann_policy(Q, beta)
    raise InvalidArgument(f"unknown expert kind {kind!r}")


def generate_mixed_dataset(mdp: Mdp, features: FeatureMap, expert_weights: Sequence, mix,
                           n: int, rng_seed=0, expert: str = "boltzmann",
                           beta: float = 50.0) -> Dataset:
    """Draw ``n`` demonstrations, each from an expert chosen according to ``mix``.

    Every trajectory gets its own child seed, so the result is a pure function
    of the inputs and ``rng_seed``.
    """
    W = np.atleast_2d(np.asarray(expert_weights, dtype=float))
    if W.shape[1] != features.num_features:
        raise InvalidArgument(
            f"expert weights have {W.shape[1]} components, features have {features.num_features}")
    mix = np.asarray(mix, dtype=float)
    if mix.shape != (W.shape[0],) or np.any(mix < 0) or abs(mix.sum() - 1.0) > 1e-9:
        raise InvalidArgument("mix must be a probability vector with one entry per expert")
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    policies = [expert_policy(mdp, features, w, expert, beta) for w in W]
    children = np.random.SeedSequence(rng_seed).spawn(n + 1)
    labels = np.random.default_rng(children[0]).choice(len(mix), size=n, p=mix)
    trajs = [sample_trajectory(mdp, policies[c], children[i + 1]) for i, c in enumerate(labels)]
    meta = {"expert": expert, "beta": beta, "mix": mix.tolist(), "n": n, "seed": rng_seed}
    return Dataset(trajs, labels, W, meta)


# --- persistence -------------------------------------------------------------

def dataset_to_lines(dataset: Dataset, num_states: int, num_actions: int, num_features: int) -> list:
    header = {
        "type": "header",
        "horizon": dataset.horizon,
        "num_states": num_states,
        "num_actions": num_actions,
        "num_features": num_features,
        "true_weights": None if dataset.true_weights is None else dataset.true_weights.tolist(),
        "generator": dataset.meta,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for i, y in enumerate(dataset.trajectories):
        label = None if dataset.true_labels is None else int(dataset.true_labels[i])
        lines.append(json.dumps({"states": y.states.tolist(), "actions": y.actions.tolist(),
                                 "label": label}, sort_keys=True))
    return lines


def save_dataset(path, dataset: Dataset, num_states: int, num_actions: int, num_features: int) -> None:
    path = Path(path)
    text = "\n".join(dataset_to_lines(dataset, num_states, num_actions, num_features)) + "\n"
    path.write_text(text)


def load_dataset(path) -> tuple:
    """Read a dataset file. Returns ``(dataset, header)``."""
    path = Path(path)
    try:
        raw = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    return parse_dataset_lines(raw, str(path))


def parse_dataset_lines(raw: list, source: str = "<lines>") -> tuple:
    if not raw:
        raise DataError(f"{source}:1: empty dataset file")
    try:
        header = json.loads(raw[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{source}:1: header is not valid JSON ({exc.msg})") from exc
    required = ("horizon", "num_features", "num_states", "num_actions")
    if not isinstance(header, dict) or header.get("type") != "header" or any(k not in header for k in required):
        raise DataError(f"{source}:1: missing or malformed header record")
    T = header["horizon"]
    trajs, labels = [], []
    for lineno, line in enumerate(raw[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            states, actions = rec["states"], rec["actions"]
            if len(states) != T or len(actions) != T:
                raise ValueError(f"expected {T} steps")
            y = Trajectory(states, actions)
            if np.any(y.states < 0) or np.any(y.states >= header["num_states"]) or np.any(
                    y.actions < 0) or np.any(y.actions >= header["num_actions"]):
                raise ValueError("index out of range")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{source}:{lineno}: bad trajectory record ({exc})") from exc
        trajs.append(y)
        labels.append(rec.get("label"))
    if any(lb is None for lb in labels):
        true_labels = None
    else:
        true_labels = np.array(labels, dtype=np.int64)
    weights = header.get("true_weights")
    ds = Dataset(trajs, true_labels, None if weights is None else np.array(weights, dtype=float),
                 dict(header.get("generator") or {}))
    return ds, header
