"""Comparison learners: EM mixture of rewards and a Dirichlet-process mixture.

Both score a demonstration with the per-step Boltzmann action model::

    log p(y | theta) = sum_t [ beta Q(s_t, a_t) - log sum_a exp(beta Q(s_t, a)) ]

where Q is the discounted optimal Q-function of reward ``theta . phi``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, InvalidArgument
from .mdp_core import FeatureMap, Mdp, _value_iteration, log_softmax_rows, reward_table
from .modelio import FittedModel, compact_labels
from .trajectories import Dataset


# --- shared likelihood ----------------------------------------------------------

def state_action_counts(dataset: Dataset, num_states: int, num_actions: int) -> np.ndarray:
    """``(N, S * A)`` visit counts of every (s, a) pair per trajectory."""
    N = len(dataset)
    C = np.zeros((N, num_states * num_actions))
    for i, y in enumerate(dataset.trajectories):
        np.add.at(C[i], y.states * num_actions + y.actions, 1.0)
    return C


def boltzmann_log_policy(mdp: Mdp, features: FeatureMap, theta, beta: float,
                         tol: float = 1e-8):
    """``(log pi(a|s), Q)`` for the Boltzmann policy of the optimal discounted Q."""
    _, Q = _value_iteration(mdp, reward_table(features, theta), tol)
    return log_softmax_rows(beta * Q), Q


def trajectory_logliks(mdp: Mdp, features: FeatureMap, theta, beta: float,
                       sa_counts: np.ndarray) -> np.ndarray:
    logpi, _ = boltzmann_log_policy(mdp, features, theta, beta)
    return sa_counts @ logpi.ravel()


def _greedy_q_jacobian(mdp: Mdp, features: FeatureMap, Q: np.ndarray) -> np.ndarray:
    """``dQ/dtheta`` holding the greedy policy fixed: an ``(S, A, K)`` table."""
    S, A, K = features.values.shape
    greedy = Q.argmax(axis=1)
    phi_pi = features.values[np.arange(S), greedy]                       # (S, K)
    P_pi = mdp.transition[np.arange(S), greedy]                          # (S, S)
    psi_v = np.linalg.solve(np.eye(S) - mdp.discount * P_pi, phi_pi)    # (S, K)
    return features.values + mdp.discount * np.einsum("sat,tk->sak", mdp.transition, psi_v)


# --- EM-MLIRL -----------------------------------------------------------------

@dataclass
class EmConfig:
    num_clusters: int = 2
    beta: float = 5.0
    max_em_iters: int = 50
    inner_ml_iters: int = 10
    lr: float = 0.1
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if int(self.num_clusters) < 1:
            raise ConfigError("num_clusters must be >= 1")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if int(self.max_em_iters) < 1 or int(self.inner_ml_iters) < 0:
            raise ConfigError("iteration counts must be positive")


@dataclass
class EmResult:
    assignments: np.ndarray
    theta: np.ndarray
    responsibilities: np.ndarray
    rho: np.ndarray
    loglik_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def diagnostics(self) -> dict:
        return {"loglik_trace": self.loglik_trace, "iterations": self.iterations,
                "converged": self.converged, "rho": self.rho.tolist()}


def _weighted_loglik(mdp, features, theta, beta, weighted_counts):
    logpi, Q = boltzmann_log_policy(mdp, features, theta, beta)
    return float(weighted_counts @ logpi.ravel()), logpi, Q


def _m_step(mdp, features, theta, beta, weighted_counts, iters, lr):
    """Backtracking gradient ascent on ``sum_sa C(s, a) log pi_theta(a | s)``.

    Steps are only taken when they do not decrease the objective, so the
    weighted likelihood is monotone over the inner loop.
    """
    S, A, K = features.values.shape
    C = weighted_counts.reshape(S, A)
    mass = C.sum()
    if mass <= 0:
        return theta
    J, logpi, Q = _weighted_loglik(mdp, features, theta, beta, weighted_counts)
    step = lr
    for _ in range(iters):
        psi = _greedy_q_jacobian(mdp, features, Q)
        pi = np.exp(logpi)
        dlog = beta * (psi - np.einsum("sa,sak->sk", pi, psi)[:, None, :])
        grad = np.einsum("sa,sak->k", C, dlog) / mass
        if not np.any(grad):
            break
        accepted = False
        for _ in range(30):
            cand = theta + step * grad
            J_new, logpi_new, Q_new = _weighted_loglik(mdp, features, cand, beta, weighted_counts)
            if J_new >= J:
                theta, J, logpi, Q = cand, J_new, logpi_new, Q_new
                step *= 2.0
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return theta


def em_mlirl_fit(dataset: Dataset, mdp: Mdp, features: FeatureMap,
                 config: Optional[EmConfig] = None) -> EmResult:
    """EM over a mixture of Boltzmann-rational experts.

    Initial responsibilities are Dirichlet draws; each iteration runs a
    generalised M-step (monotone backtracking ascent per cluster, then
    ``rho`` = mean responsibilities) followed by the E-step. The recorded
    log-likelihood is the mixture likelihood after each M-step.
    """
    config = config or EmConfig()
    N, D = len(dataset), int(config.num_clusters)
    if D > N:
        raise InvalidArgument(f"num_clusters = {D} exceeds the {N} trajectories")
    features.check_mdp(mdp)
    rng = np.random.default_rng(config.seed)
    C = state_action_counts(dataset, mdp.num_states, mdp.num_actions)
    theta = rng.uniform(-0.1, 0.1, size=(D, features.num_features))
    resp = rng.dirichlet(np.ones(D), size=N).T
    trace = []
    converged = False
    it = 0
    for it in range(1, int(config.max_em_iters) + 1):
        rho = resp.mean(axis=1)
        for d in range(D):
            theta[d] = _m_step(mdp, features, theta[d], config.beta, resp[d] @ C,
                               int(config.inner_ml_iters), config.lr)
        L = np.stack([trajectory_logliks(mdp, features, th, config.beta, C) for th in theta])
        with np.errstate(divide="ignore"):
            joint = np.log(rho)[:, None] + L
        norm = logsumexp(joint, axis=0)
        trace.append(float(norm.sum()))
        new_resp = np.exp(joint - norm)
        change = float(np.max(np.abs(new_resp - resp)))
        resp = new_resp
        if change < config.tol:
            converged = True
            break
    rho = resp.mean(axis=1)
    return EmResult(resp.argmax(axis=0), theta, resp, rho, trace, it, converged)


def em_to_fitted(res: EmResult, config: EmConfig) -> FittedModel:
    ids, compact = compact_labels(res.assignments)
    pi = np.bincount(compact, minlength=len(ids)) / len(compact)
    return FittedModel("em-mlirl", res.theta[ids], compact, pi, asdict(config), res.diagnostics())


# --- DPM-BIRL -----------------------------------------------------------------

@dataclass
class DpmConfig:
    alpha: float = 1.0
    beta: float = 5.0
    prior_mean: float = 0.0
    prior_std: float = 0.5
    proposal_std: float = 0.1
    mh_iters: int = 6000
    burn_in: int = 5000
    thin: int = 10
    seed: int = 0
    # "systematic": every sweep visits each trajectory then moves each cluster's weights;
    # "random": each step is one randomly chosen assignment or weight move
    scan: str = "systematic"
    # optional finite base measure: a list of weight vectors drawn uniformly
    dictionary: Optional[list] = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.prior_std <= 0 or self.proposal_std <= 0:
            raise ConfigError("prior_std and proposal_std must be positive")
        if int(self.mh_iters) < 1 or int(self.thin) < 1 or not 0 <= int(self.burn_in) < int(self.mh_iters):
            raise ConfigError("need mh_iters >= 1, thin >= 1 and 0 <= burn_in < mh_iters")
        if self.scan not in ("systematic", "random"):
            raise ConfigError(f"unknown scan {self.scan!r}")
        if self.dictionary is not None and len(self.dictionary) == 0:
            raise ConfigError("dictionary must be non-empty")


@dataclass
class DpmSample:
    assignments: np.ndarray      # canonical labels 0..K-1 in order of first appearance
    theta: np.ndarray            # (K, num_features)
    log_posterior: float


@dataclass
class DpmResult:
    samples: list
    map_state: DpmSample
    acceptance_rate: float
    num_clusters_trace: list

    def diagnostics(self) -> dict:
        return {"acceptance_rate": self.acceptance_rate, "num_samples": len(self.samples),
                "map_log_posterior": self.map_state.log_posterior,
                "num_clusters_trace": self.num_clusters_trace}


def canonical_labels(assignments) -> np.ndarray:
    """Relabel so clusters are numbered in order of first appearance."""
    mapping = {}
    return np.array([mapping.setdefault(int(c), len(mapping)) for c in assignments], dtype=np.int64)


def crp_log_prior(assignments, alpha: float) -> float:
    """Log probability of a partition under the Chinese restaurant process."""
    sizes = np.bincount(canonical_labels(assignments))
    N = int(sizes.sum())
    return (len(sizes) * math.log(alpha) + sum(math.lgamma(n) for n in sizes)
            - sum(math.log(alpha + i) for i in range(N)))


def mh_log_acceptance(loglik_new: float, loglik_old: float, logprior_new: float,
                      logprior_old: float, log_q_ratio: float = 0.0) -> float:
    """``log min(1, ratio)`` of a Metropolis-Hastings move (``log_q_ratio = log q(old|new) - log q(new|old)``)."""
    r = (loglik_new - loglik_old) + (logprior_new - logprior_old) + log_q_ratio
    return min(0.0, r)


class _DpmChain:
    def __init__(self, dataset, mdp, features, config: DpmConfig):
        self.mdp, self.features, self.cfg = mdp, features, config
        self.rng = np.random.default_rng(config.seed)
        self.C = state_action_counts(dataset, mdp.num_states, mdp.num_actions)
        self.N = len(dataset)
        self.K = features.num_features
        self.dict_theta = None
        if config.dictionary is not None:
            self.dict_theta = np.atleast_2d(np.asarray(config.dictionary, dtype=float))
            if self.dict_theta.shape[1] != self.K:
                raise InvalidArgument("dictionary entries must have one weight per feature")
            self.dict_ll = np.stack([self._loglik(th) for th in self.dict_theta])
        self.proposed = 0
        self.accepted = 0

    def _loglik(self, theta) -> np.ndarray:
        return trajectory_logliks(self.mdp, self.features, theta, self.cfg.beta, self.C)

    def log_prior(self, cl) -> float:
        if self.dict_theta is not None:
            return -math.log(len(self.dict_theta))
        z = (cl["theta"] - self.cfg.prior_mean) / self.cfg.prior_std
        return float(-0.5 * z @ z - self.K * math.log(self.cfg.prior_std * math.sqrt(2 * math.pi)))

    def draw_base(self) -> dict:
        if self.dict_theta is not None:
            j = int(self.rng.integers(len(self.dict_theta)))
            return {"theta": self.dict_theta[j].copy(), "idx": j, "ll": self.dict_ll[j]}
        th = self.rng.normal(self.cfg.prior_mean, self.cfg.prior_std, size=self.K)
        return {"theta": th, "ll": self._loglik(th)}

    def init_state(self):
        self.c = np.zeros(self.N, dtype=np.int64)
        self.clusters = {0: self.draw_base()}
        self.next_id = 1

    def update_assignment(self, i: int) -> None:
        cur = int(self.c[i])
        sizes = np.bincount(self.c, minlength=self.next_id)
        singleton = sizes[cur] == 1
        ids = [k for k in self.clusters if k != cur or not singleton]
        counts = [sizes[k] - (1 if k == cur else 0) for k in ids]
        aux = self.clusters[cur] if singleton else self.draw_base()
        logw = [math.log(n) + float(self.clusters[k]["ll"][i]) for k, n in zip(ids, counts)]
        logw.append(math.log(self.cfg.alpha) + float(aux["ll"][i]))
        logw = np.array(logw)
        p = np.exp(logw - logw.max())
        j = int(self.rng.choice(len(p), p=p / p.sum()))
        if j < len(ids):
            new = ids[j]
            if singleton:
                del self.clusters[cur]
        elif singleton:
            new = cur
        else:
            new = self.next_id
            self.next_id += 1
            self.clusters[new] = aux
        self.c[i] = new

    def update_theta(self, k: int) -> None:
        cl = self.clusters[k]
        members = self.c == k
        if self.dict_theta is not None:
            prop = self.draw_base()
        else:
            th = cl["theta"] + self.rng.normal(0.0, self.cfg.proposal_std, size=self.K)
            prop = {"theta": th, "ll": self._loglik(th)}
        log_a = mh_log_acceptance(float(prop["ll"][members].sum()), float(cl["ll"][members].sum()),
                                  self.log_prior(prop), self.log_prior(cl))
        self.proposed += 1
        if math.log(self.rng.random()) < log_a:
            self.clusters[k] = prop
            self.accepted += 1

    def step(self) -> None:
        if self.cfg.scan == "systematic":
            for i in range(self.N):
                self.update_assignment(i)
            for k in sorted(self.clusters):
                self.update_theta(k)
        else:
            i = int(self.rng.integers(self.N))
            if self.rng.random() < 0.5:
                self.update_assignment(i)
            else:
                self.update_theta(int(self.c[i]))

    def snapshot(self) -> DpmSample:
        order = list(dict.fromkeys(int(k) for k in self.c))
        canon = canonical_labels(self.c)
        theta = np.stack([self.clusters[k]["theta"] for k in order])
        ll = sum(float(self.clusters[k]["ll"][self.c == k].sum()) for k in order)
        lp = crp_log_prior(self.c, self.cfg.alpha) + sum(self.log_prior(self.clusters[k]) for k in order)
        return DpmSample(canon, theta, ll + lp)


def dpm_birl_fit(dataset: Dataset, mdp: Mdp, features: FeatureMap,
                 config: Optional[DpmConfig] = None) -> DpmResult:
    """MCMC for a Dirichlet-process mixture of Boltzmann-rational experts.

    Assignments use the Chinese-restaurant conditional with one auxiliary
    cluster drawn from the base measure; cluster weights take Gaussian
    random-walk Metropolis-Hastings steps (independence draws from the
    dictionary when one is given). The chain starts with every trajectory in
    one cluster. ``mh_iters`` counts sweeps (or single moves when
    ``scan="random"``); states after ``burn_in`` are kept every ``thin``.
    """
    config = config or DpmConfig()
    if len(dataset) < 1:
        raise InvalidArgument("need at least one trajectory")
    features.check_mdp(mdp)
    chain = _DpmChain(dataset, mdp, features, config)
    chain.init_state()
    best = chain.snapshot()
    samples, k_trace = [], []
    for it in range(int(config.mh_iters)):
        chain.step()
        snap = chain.snapshot()
        k_trace.append(len(snap.theta))
        if snap.log_posterior > best.log_posterior:
            best = snap
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            samples.append(snap)
    rate = chain.accepted / chain.proposed if chain.proposed else 0.0
    return DpmResult(samples, best, rate, k_trace)


def dpm_to_fitted(res: DpmResult, config: DpmConfig) -> FittedModel:
    m = res.map_state
    pi = np.bincount(m.assignments, minlength=len(m.theta)) / len(m.assignments)
    cfg = asdict(config)
    diag = res.diagnostics()
    diag["num_clusters_trace"] = diag["num_clusters_trace"][-100:]
    return FittedModel("dpm-birl", m.theta, m.assignments, pi, cfg, diag)
