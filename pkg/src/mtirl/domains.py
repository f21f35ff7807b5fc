"""Small benchmark MDPs used by tests, scripts and the CLI."""
from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .mdp_core import FeatureMap, Mdp


def deterministic_transition(next_state: np.ndarray) -> np.ndarray:
    S, A = next_state.shape
    T = np.zeros((S, A, S))
    T[np.arange(S)[:, None], np.arange(A)[None, :], next_state] = 1.0
    return T


def toy_chain(horizon: int = 4, discount: float = 0.9):
    """Two states, two actions (stay, switch); feature 0 fires in state 1,
    feature 1 fires on the switch action."""
    nxt = np.array([[0, 1], [1, 0]])
    phi = np.zeros((2, 2, 2))
    phi[1, :, 0] = 1.0
    phi[:, 1, 1] = 1.0
    mdp = Mdp(deterministic_transition(nxt), np.array([1.0, 0.0]), horizon, discount)
    return mdp, FeatureMap(phi, ("InStateOne", "Switch"))


TOY_CHAIN_EXPERTS = np.array([[1.0, -0.2], [-1.0, -0.2]])

# 6x6 grid; 'G' goal cells, 'x' hazards.
_GRID = (
    "......",
    ".xx...",
    "...x..",
    ".x..x.",
    "....xG",
    "..x...",
)
GRID_ACTIONS = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))  # stay, up, down, left, right


def toy_grid(horizon: int = 10, discount: float = 0.95):
    """Deterministic gridworld with two features: AtGoal and OnHazard.

    Start states are the four corners other than the goal's.
    """
    rows, cols = len(_GRID), len(_GRID[0])
    S, A = rows * cols, len(GRID_ACTIONS)
    nxt = np.zeros((S, A), dtype=np.int64)
    phi = np.zeros((S, A, 2))
    for r in range(rows):
        for c in range(cols):
            s = r * cols + c
            for a, (dr, dc) in enumerate(GRID_ACTIONS):
                rr, cc = min(max(r + dr, 0), rows - 1), min(max(c + dc, 0), cols - 1)
                nxt[s, a] = rr * cols + cc
            phi[s, :, 0] = _GRID[r][c] == "G"
            phi[s, :, 1] = _GRID[r][c] == "x"
    p0 = np.zeros(S)
    for s in (0, cols - 1, (rows - 1) * cols):
        p0[s] = 1.0
    p0[2 * cols + 1] = 1.0
    p0 /= p0.sum()
    mdp = Mdp(deterministic_transition(nxt), p0, horizon, discount)
    return mdp, FeatureMap(phi, ("AtGoal", "OnHazard"))


TOY_GRID_EXPERT = np.array([1.0, -1.0])


def random_deterministic_mdp(num_states: int, num_actions: int, num_features: int,
                             horizon: int, seed=None, discount: float = 0.9):
    rng = np.random.default_rng(seed)
    nxt = rng.integers(0, num_states, size=(num_states, num_actions))
    phi = (rng.random((num_states, num_actions, num_features)) < 0.4).astype(float)
    p0 = rng.dirichlet(np.ones(num_states))
    mdp = Mdp(deterministic_transition(nxt), p0, horizon, discount)
    return mdp, FeatureMap(phi)


def random_stochastic_mdp(num_states: int, num_actions: int, num_features: int,
                          horizon: int, seed=None, discount: float = 0.9, sparsity: float = 0.5):
    rng = np.random.default_rng(seed)
    T = rng.random((num_states, num_actions, num_states))
    T *= rng.random(T.shape) < sparsity
    T[np.arange(num_states)[:, None], np.arange(num_actions)[None, :],
      rng.integers(0, num_states, size=(num_states, num_actions))] += 0.5
    T /= T.sum(axis=2, keepdims=True)
    phi = (rng.random((num_states, num_actions, num_features)) < 0.4).astype(float)
    p0 = rng.dirichlet(np.ones(num_states))
    return Mdp(T, p0, horizon, discount), FeatureMap(phi)


def get_domain(name: str):
    """Return ``(mdp, features, expert_weights)`` for a named domain."""
    if name == "onion":
        from .onion_domain import build_onion_mdp, expert_weights
        mdp, features = build_onion_mdp()
        return mdp, features, np.stack(expert_weights())
    if name == "toy-chain":
        mdp, features = toy_chain()
        return mdp, features, TOY_CHAIN_EXPERTS.copy()
    if name == "toy-grid":
        mdp, features = toy_grid()
        return mdp, features, TOY_GRID_EXPERT[None, :].copy()
    raise ConfigError(f"unknown domain {name!r}")
