"""Finite MDPs with linear rewards over binary features, and exact planning."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from ._kernels import det_value_iteration
from .errors import InvalidArgument, NumericError

DEFAULT_DISCOUNT = 0.95
DEFAULT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite MDP with a dense ``(S, A, S')`` transition table.

    ``horizon`` is the fixed trajectory length T used by demonstrations and by
    the MaxEnt trajectory distribution.
    """

    transition: np.ndarray
    start_dist: np.ndarray
    horizon: int
    discount: float = DEFAULT_DISCOUNT

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        p0 = np.asarray(self.start_dist, dtype=float)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "start_dist", p0)
        if T.ndim != 3 or T.shape[0] != T.shape[2] or T.shape[0] < 1 or T.shape[1] < 1:
            raise InvalidArgument(f"transition must have shape (S, A, S), got {T.shape}")
        if np.any(T < 0) or not np.allclose(T.sum(axis=2), 1.0, atol=1e-9, rtol=0):
            raise InvalidArgument("transition rows must be probability vectors")
        if p0.shape != (T.shape[0],):
            raise InvalidArgument(f"start_dist must have length {T.shape[0]}")
        if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-9:
            raise InvalidArgument("start_dist must be a probability vector")
        if int(self.horizon) < 1:
            raise InvalidArgument("horizon must be >= 1")
        object.__setattr__(self, "horizon", int(self.horizon))
        if not 0.0 <= self.discount < 1.0:
            raise InvalidArgument("discount must lie in [0, 1)")

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @cached_property
    def is_deterministic(self) -> bool:
        return bool(np.all(self.transition.max(axis=2) == 1.0))

    @cached_property
    def next_state(self) -> Optional[np.ndarray]:
        """``(S, A)`` successor table when every transition row is a point mass."""
        if not self.is_deterministic:
            return None
        return self.transition.argmax(axis=2)

    def expected_next(self, values: np.ndarray) -> np.ndarray:
        """``sum_s' T(s, a, s') values(s')`` as an ``(S, A)`` table."""
        if self.next_state is not None:
            return values[self.next_state]
        return self.transition @ values

    def replace(self, **changes) -> "Mdp":
        kw = dict(transition=self.transition, start_dist=self.start_dist,
                  horizon=self.horizon, discount=self.discount)
        kw.update(changes)
        return Mdp(**kw)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Binary features phi_k(s, a), stored as an ``(S, A, K)`` table."""

    values: np.ndarray
    names: tuple = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise InvalidArgument(f"feature table must be (S, A, K), got {v.shape}")
        if not np.all((v == 0.0) | (v == 1.0)):
            raise InvalidArgument("feature entries must be exactly 0 or 1")
        object.__setattr__(self, "values", v)
        if self.names and len(self.names) != v.shape[2]:
            raise InvalidArgument("one name per feature required")

    @property
    def num_features(self) -> int:
        return self.values.shape[2]

    def check_mdp(self, mdp: Mdp) -> None:
        if self.values.shape[:2] != (mdp.num_states, mdp.num_actions):
            raise InvalidArgument(
                f"feature table {self.values.shape[:2]} does not match MDP "
                f"({mdp.num_states}, {mdp.num_actions})")


@dataclass(frozen=True, eq=False)
class Policy:
    action_probs: np.ndarray
    kind: str = "stochastic"

    def __post_init__(self):
        p = np.asarray(self.action_probs, dtype=float)
        object.__setattr__(self, "action_probs", p)
        if self.kind not in ("deterministic", "stochastic"):
            raise InvalidArgument(f"unknown policy kind {self.kind!r}")
        if p.ndim != 2 or np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise InvalidArgument("policy rows must be probability vectors")
        if self.kind == "deterministic" and not np.all((p == 1.0).sum(axis=1) == 1):
            raise InvalidArgument("deterministic policy needs exactly one 1 per row")

    @property
    def num_states(self) -> int:
        return self.action_probs.shape[0]

    def actions(self) -> np.ndarray:
        """Most probable action per state (the action itself for deterministic policies)."""
        return self.action_probs.argmax(axis=1)


def check_weights(theta, num_features: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (num_features,):
        raise InvalidArgument(f"weights must have length {num_features}, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise NumericError("weights must be finite")
    return theta


def reward(features: FeatureMap, theta, s: int, a: int) -> float:
    """R(s, a) = theta . phi(s, a)."""
    S, A, K = features.values.shape
    theta = check_weights(theta, K)
    if not (0 <= s < S and 0 <= a < A):
        raise InvalidArgument(f"(s, a) = ({s}, {a}) out of range for ({S}, {A})")
    return float(features.values[s, a] @ theta)


def reward_table(features: FeatureMap, theta) -> np.ndarray:
    theta = check_weights(theta, features.num_features)
    R = features.values @ theta
    if not np.all(np.isfinite(R)):
        raise NumericError("non-finite reward")
    return R


def value_iteration(mdp: Mdp, features: FeatureMap, theta, tol: float = DEFAULT_TOL,
                    max_iters: int = 1_000_000, V0: Optional[np.ndarray] = None):
    """Discounted value iteration. Returns ``(V, Q)`` with ``V = max_a Q``
    up to a Bellman residual below ``tol``."""
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    features.check_mdp(mdp)
    R = reward_table(features, theta)
    return _value_iteration(mdp, R, tol, max_iters, V0)


def _value_iteration(mdp: Mdp, R: np.ndarray, tol: float, max_iters: int = 1_000_000,
                     V0: Optional[np.ndarray] = None):
    gamma = mdp.discount
    V = np.zeros(mdp.num_states) if V0 is None else np.array(V0, dtype=float)
    if mdp.next_state is not None:
        Q = det_value_iteration(np.ascontiguousarray(R, dtype=float), mdp.next_state,
                                gamma, tol, int(max_iters), V)
        return Q.max(axis=1), Q
    for _ in range(max_iters):
        V_new = (R + gamma * mdp.expected_next(V)).max(axis=1)
        delta = np.max(np.abs(V_new - V))
        V = V_new
        if delta < tol:
            break
    Q = R + gamma * mdp.expected_next(V)
    return Q.max(axis=1), Q


def greedy_policy(Q: np.ndarray) -> Policy:
    """Argmax policy; ties go to the lowest action index."""
    Q = np.asarray(Q, dtype=float)
    probs = np.zeros_like(Q)
    probs[np.arange(Q.shape[0]), Q.argmax(axis=1)] = 1.0
    return Policy(probs, kind="deterministic")


def boltzmann_policy(Q: np.ndarray, beta: float) -> Policy:
    if beta <= 0:
        raise InvalidArgument("beta must be positive")
    return Policy(softmax_rows(beta * np.asarray(Q, dtype=float)), kind="stochastic")


def log_softmax_rows(X: np.ndarray) -> np.ndarray:
    m = X.max(axis=1, keepdims=True)
    Z = X - m
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


def softmax_rows(X: np.ndarray) -> np.ndarray:
    Z = X - X.max(axis=1, keepdims=True)
    np.exp(Z, out=Z)
    Z /= Z.sum(axis=1, keepdims=True)
    return Z


def policy_evaluation(mdp: Mdp, features: FeatureMap, theta, policy: Policy,
                      tol: float = DEFAULT_TOL, episodic: bool = False) -> np.ndarray:
    """State values of ``policy`` under reward ``theta``.

    ``episodic=True`` returns the undiscounted return of an episode of exactly
    ``mdp.horizon`` steps; otherwise the discounted fixed point.
    """
    features.check_mdp(mdp)
    if policy.action_probs.shape != (mdp.num_states, mdp.num_actions):
        raise InvalidArgument("policy shape does not match MDP")
    R = reward_table(features, theta)
    return evaluate_rewards(mdp, R, policy.action_probs, tol=tol, episodic=episodic)


def evaluate_rewards(mdp: Mdp, R: np.ndarray, action_probs: np.ndarray,
                     tol: float = DEFAULT_TOL, episodic: bool = False) -> np.ndarray:
    r_pi = (action_probs * R).sum(axis=1)
    if episodic:
        V = np.zeros(mdp.num_states)
        for _ in range(mdp.horizon):
            V = r_pi + (action_probs * mdp.expected_next(V)).sum(axis=1)
        return V
    # P_pi[s, s'] = sum_a pi(a|s) T(s, a, s')
    P_pi = np.einsum("sa,sat->st", action_probs, mdp.transition)
    V = np.linalg.solve(np.eye(mdp.num_states) - mdp.discount * P_pi, r_pi)
    if not np.all(np.isfinite(V)):
        raise NumericError("policy evaluation diverged")
    # one Bellman-expectation sweep keeps the residual contract honest under round-off
    residual = np.max(np.abs(r_pi + mdp.discount * P_pi @ V - V))
    if residual >= tol:
        for _ in range(10_000):
            V_new = r_pi + mdp.discount * P_pi @ V
            if np.max(np.abs(V_new - V)) < tol:
                V = V_new
                break
            V = V_new
    return V
