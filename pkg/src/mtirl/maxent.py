"""Single-task maximum-entropy IRL over fixed-length trajectories.

The trajectory distribution is conditioned on the start state::

    P(y) = p0(s_0) * prod_t T(s_{t+1} | s_t, a_t) * exp(theta . phi(y)) / Z(s_0)

so ``log Z`` below means ``sum_s p0(s) log Z(s)`` and its gradient is the
expected feature count. Dynamics enter through the backward recursion; with
stochastic transitions the forward pass uses the correspondingly tilted
successor distribution, which keeps the gradient identity exact.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ._kernels import det_backward, det_forward
from .errors import InvalidArgument, UnsupportedMode
from .mdp_core import FeatureMap, Mdp, check_weights, reward_table
from .trajectories import Dataset, Trajectory, count_matrix, empirical_start_dist, feature_counts


@dataclass(frozen=True)
class TrajectorySpaceSpec:
    mode: str = "dp"
    max_enum: int = 200_000

    def __post_init__(self):
        if self.mode not in ("dp", "enumerate"):
            raise InvalidArgument(f"unknown trajectory-space mode {self.mode!r}")


@dataclass
class MaxEntModel:
    weights: np.ndarray
    log_partition: float
    expected_features: np.ndarray
    converged: bool = False
    iterations: int = 0
    residual: float = float("inf")
    residual_trace: list = field(default_factory=list, repr=False)


def log_weight(theta, y: Trajectory, features: FeatureMap) -> float:
    """Unnormalised log-probability theta . phi(y)."""
    theta = check_weights(theta, features.num_features)
    return float(feature_counts(y, features) @ theta)


@dataclass
class SoftPass:
    """Result of one backward/forward sweep."""

    log_z0: np.ndarray          # (S,) per-start-state log normalisers
    log_partition: float        # sum_s p0(s) log Z(s)
    expected_features: np.ndarray
    visitation: np.ndarray      # (S, A) expected state-action visits summed over t
    entropy: Optional[float] = None


@dataclass
class Backward:
    soft_q: np.ndarray      # (T, S, A)
    log_z: np.ndarray       # (T + 1, S); row 0 holds the per-start-state log normalisers
    w: np.ndarray           # (T, S, A) log expected next-step normaliser


def soft_backward(mdp: Mdp, R: np.ndarray) -> Backward:
    """Backward recursion ``log Z_t(s) = logsumexp_a [R(s, a) + log E_{s'} Z_{t+1}(s')]``."""
    S, A = R.shape
    T = mdp.horizon
    det = mdp.next_state
    if det is not None:
        return Backward(*det_backward(np.ascontiguousarray(R, dtype=float), det, T))
    Qs = np.empty((T, S, A))
    logZ = np.empty((T + 1, S))
    W = np.empty((T, S, A))
    logZ[T] = 0.0
    for t in range(T - 1, -1, -1):
        if t == T - 1:
            W[t] = 0.0
        else:
            m = logZ[t + 1].max()
            W[t] = np.log(mdp.transition @ np.exp(logZ[t + 1] - m)) + m
        Qs[t] = R + W[t]
        logZ[t] = _row_logsumexp(Qs[t])
    return Backward(Qs, logZ, W)


def _row_logsumexp(X: np.ndarray) -> np.ndarray:
    # scipy's logsumexp carries enough per-call overhead to dominate this loop
    m = X.max(axis=1)
    return np.log(np.exp(X - m[:, None]).sum(axis=1)) + m


def soft_forward(mdp: Mdp, bw: Backward, start_dist: np.ndarray, with_entropy: bool = False):
    """Expected state-action visits summed over time.

    Returns ``(visits, dyn_logp)`` where ``dyn_logp`` is the expected sum of
    log transition probabilities along a trajectory (zero for deterministic
    dynamics, and only computed when ``with_entropy``).
    """
    T = mdp.horizon
    S = mdp.num_states
    det = mdp.next_state
    if det is not None:
        return det_forward(bw.soft_q, bw.log_z, det, np.asarray(start_dist, dtype=float)), 0.0
    D = np.asarray(start_dist, dtype=float).copy()
    visits = np.zeros(bw.soft_q.shape[1:])
    dyn_logp = 0.0
    for t in range(T):
        Dsa = D[:, None] * np.exp(bw.soft_q[t] - bw.log_z[t][:, None])
        visits += Dsa
        if t + 1 == T:
            break
        trans = mdp.transition
        with np.errstate(over="ignore", invalid="ignore"):
            tilt = np.where(trans > 0, trans * np.exp(bw.log_z[t + 1][None, None, :] - bw.w[t][:, :, None]), 0.0)
        joint = Dsa[:, :, None] * tilt
        if with_entropy:
            dyn_logp += float(np.sum(joint[trans > 0] * np.log(trans[trans > 0])))
        D = joint.sum(axis=(0, 1))
    return visits, dyn_logp


def expected_log_partition(log_z0: np.ndarray, start_dist: np.ndarray) -> float:
    p0 = np.asarray(start_dist, dtype=float)
    support = p0 > 0
    return float(p0[support] @ log_z0[support])


def soft_pass(mdp: Mdp, R: np.ndarray, phi: np.ndarray, start_dist: np.ndarray,
              with_entropy: bool = False) -> SoftPass:
    """Finite-horizon soft backup followed by a forward visitation sweep."""
    bw = soft_backward(mdp, R)
    visits, dyn_logp = soft_forward(mdp, bw, start_dist, with_entropy)
    p0 = np.asarray(start_dist, dtype=float)
    log_partition = expected_log_partition(bw.log_z[0], p0)
    E = np.einsum("sa,sak->k", visits, phi)
    entropy = None
    if with_entropy:
        support = p0 > 0
        h_start = -float(p0[support] @ np.log(p0[support]))
        entropy = h_start + log_partition - float(np.sum(visits * R)) - dyn_logp
    return SoftPass(bw.log_z[0].copy(), log_partition, E, visits, entropy)


def _check_enumerable(mdp: Mdp, spec: TrajectorySpaceSpec) -> None:
    if not mdp.is_deterministic:
        raise UnsupportedMode("enumeration requires deterministic transitions")
    if mdp.num_actions ** mdp.horizon > spec.max_enum:
        raise UnsupportedMode(
            f"|A|^T = {mdp.num_actions ** mdp.horizon} exceeds max_enum = {spec.max_enum}")


def enumerate_trajectories(mdp: Mdp, start: int):
    """All ``|A|^T`` trajectories from ``start`` on a deterministic MDP.

    Returns ``(states, actions)`` arrays of shape ``(|A|^T, T)``.
    """
    T, A = mdp.horizon, mdp.num_actions
    actions = np.array(list(itertools.product(range(A), repeat=T)), dtype=np.int64).reshape(-1, T)
    states = np.empty_like(actions)
    states[:, 0] = start
    for t in range(1, T):
        states[:, t] = mdp.next_state[states[:, t - 1], actions[:, t - 1]]
    return states, actions


def _enumerate_partition(mdp: Mdp, features: FeatureMap, theta, start_dist, with_entropy=False):
    p0 = np.asarray(start_dist, dtype=float)
    logZ0 = np.full(mdp.num_states, -np.inf)
    E = np.zeros(features.num_features)
    H = 0.0
    for s in np.flatnonzero(p0 > 0):
        states, actions = enumerate_trajectories(mdp, s)
        counts = features.values[states, actions].sum(axis=1)
        lw = counts @ theta
        logZ0[s] = logsumexp(lw)
        prob = np.exp(lw - logZ0[s])
        E += p0[s] * (prob @ counts)
        if with_entropy:
            logp = np.log(p0[s]) + lw - logZ0[s]
            H -= p0[s] * float(prob @ logp)
    support = p0 > 0
    return float(p0[support] @ logZ0[support]), E, H


def partition_and_expectation(mdp: Mdp, features: FeatureMap, theta,
                              spec: Optional[TrajectorySpaceSpec] = None,
                              start_dist=None):
    """``(log Z, E[phi])`` of the MaxEnt trajectory distribution under ``theta``."""
    spec = spec or TrajectorySpaceSpec()
    features.check_mdp(mdp)
    theta = check_weights(theta, features.num_features)
    p0 = mdp.start_dist if start_dist is None else np.asarray(start_dist, dtype=float)
    if spec.mode == "enumerate":
        _check_enumerable(mdp, spec)
        logZ, E, _ = _enumerate_partition(mdp, features, theta, p0)
        return logZ, E
    sp = soft_pass(mdp, reward_table(features, theta), features.values, p0)
    return sp.log_partition, sp.expected_features


def trajectory_entropy(mdp: Mdp, features: FeatureMap, theta,
                       spec: Optional[TrajectorySpaceSpec] = None, start_dist=None) -> float:
    """Shannon entropy (nats) of the MaxEnt trajectory distribution."""
    spec = spec or TrajectorySpaceSpec()
    theta = check_weights(theta, features.num_features)
    p0 = mdp.start_dist if start_dist is None else np.asarray(start_dist, dtype=float)
    if spec.mode == "enumerate":
        _check_enumerable(mdp, spec)
        return _enumerate_partition(mdp, features, theta, p0, with_entropy=True)[2]
    return soft_pass(mdp, reward_table(features, theta), features.values, p0, with_entropy=True).entropy


def step_size(lr0: float, tau: float, t: int) -> float:
    return lr0 / (1.0 + t / tau)


def fit_maxent(dataset: Dataset, mdp: Mdp, features: FeatureMap,
               spec: Optional[TrajectorySpaceSpec] = None, lr0: float = 0.1, tau: float = 100.0,
               max_iters: int = 20_000, grad_tol: float = 1e-4, start: str = "empirical",
               theta0=None) -> MaxEntModel:
    """Fit theta by gradient descent on the dual ``log Z(theta) - theta . phi_hat``.

    ``start="empirical"`` conditions the model on the start-state histogram of
    ``dataset``; ``start="mdp"`` uses ``mdp.start_dist``. Stops when the
    feature-matching residual ``max_k |E[phi_k] - phi_hat_k|`` drops to
    ``grad_tol`` (``converged=True``) or after ``max_iters`` steps.
    """
    if len(dataset) == 0:
        raise InvalidArgument("fit_maxent needs at least one trajectory")
    spec = spec or TrajectorySpaceSpec()
    features.check_mdp(mdp)
    phi_hat = count_matrix(dataset, features).mean(axis=0)
    if start == "empirical":
        p0 = empirical_start_dist(dataset, mdp.num_states)
    elif start == "mdp":
        p0 = mdp.start_dist
    else:
        raise InvalidArgument(f"unknown start mode {start!r}")
    theta = np.zeros(features.num_features) if theta0 is None else np.array(theta0, dtype=float)
    trace = []
    converged = False
    it = 0
    while True:
        logZ, E = partition_and_expectation(mdp, features, theta, spec, start_dist=p0)
        grad = E - phi_hat
        resid = float(np.max(np.abs(grad)))
        trace.append(resid)
        if resid <= grad_tol:
            converged = True
            break
        if it >= max_iters:
            break
        theta = theta - step_size(lr0, tau, it) * grad
        it += 1
    return MaxEntModel(theta, logZ, E, converged, it, resid, trace)
