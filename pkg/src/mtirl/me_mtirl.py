"""Multi-task MaxEnt IRL: joint clustering and per-cluster reward learning.

Each cluster d owns reward weights ``theta[d]`` and a relaxed assignment row
``v[d]`` over the N demonstrations (columns of ``v`` live on the simplex,
``pi = v.mean(axis=1)``). The trajectory model of cluster d is the MaxEnt
distribution of :mod:`mtirl.maxent` conditioned on the start states of the
trajectories assigned to it.

The Lagrangian used for the theta-step is::

    L(theta, v) = sum_d [ pi_d * logZ_d(theta_d) - theta_d . phi_hat_d(v) ]
                - lam * sum_d pi_d log pi_d

with ``pi_d logZ_d = (1/N) sum_i v[d, i] log Z(theta_d; s0_i)`` and
``phi_hat_d = (1/N) sum_i v[d, i] phi(y_i)``, so that
``dL/dtheta_d = pi_d E_d[phi] - phi_hat_d`` and
``-L = (1/N) sum_{d,i} v[d, i] log P_d(y_i) + lam * sum_d pi_d log pi_d``.
Theta descends L; v ascends ``-L``, so both steps improve the same score
and low-entropy mixtures are preferred. The literal ``dL/dv`` expression with
its ``|Y| / v`` term is available as :func:`grad_v` and, through
``MtirlConfig(v_gradient="printed")``, as the v-step direction.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, InvalidArgument, InvalidState
from .maxent import (TrajectorySpaceSpec, expected_log_partition, fit_maxent,
                     partition_and_expectation, soft_backward, soft_forward, step_size,
                     trajectory_entropy)
from .mdp_core import FeatureMap, Mdp, reward_table
from .modelio import FittedModel, compact_labels
from .trajectories import Dataset, count_matrix, feature_counts


@dataclass
class MtirlConfig:
    d_max: int = 5
    lr_theta: float = 0.05
    lr_v: float = 0.01
    tau: float = 100.0
    max_iters: int = 2000
    tol: float = 1e-4
    prune_threshold: float = 0.05
    seed: int = 0
    # v-step temperature 1 / (1 + anneal * t); None keeps it at 1
    anneal: Optional[float] = None
    v_floor: float = 1e-6
    min_entropy_weight: float = 1.0
    v_gradient: str = "likelihood"       # or "printed"
    likelihood_form: str = "scaled"      # or "unscaled"
    # "mass" divides each cluster's theta-step by max(pi_d, v_floor)
    theta_preconditioner: str = "mass"   # or "none"
    refit: bool = True
    refit_lr: float = 0.1
    refit_tau: float = 100.0
    refit_max_iters: int = 20_000
    refit_tol: float = 1e-4
    trajectory_space: str = "dp"

    def __post_init__(self):
        if int(self.d_max) < 1:
            raise ConfigError("d_max must be >= 1")
        if self.lr_theta <= 0 or self.lr_v <= 0:
            raise ConfigError("lr_theta and lr_v must be positive")
        if not 0.0 < self.prune_threshold < 1.0 / self.d_max:
            raise ConfigError(f"prune_threshold must lie in (0, 1/d_max) = (0, {1.0 / self.d_max:g})")
        if self.tau <= 0 or self.refit_tau <= 0:
            raise ConfigError("decay constants must be positive")
        if int(self.max_iters) < 0 or int(self.refit_max_iters) < 0:
            raise ConfigError("iteration limits must be non-negative")
        if self.anneal is not None and self.anneal < 0:
            raise ConfigError("anneal must be non-negative")
        if not 0.0 < self.v_floor < 1.0:
            raise ConfigError("v_floor must lie in (0, 1)")
        if self.v_gradient not in ("likelihood", "printed"):
            raise ConfigError(f"unknown v_gradient {self.v_gradient!r}")
        if self.likelihood_form not in ("scaled", "unscaled"):
            raise ConfigError(f"unknown likelihood_form {self.likelihood_form!r}")
        if self.theta_preconditioner not in ("mass", "none"):
            raise ConfigError(f"unknown theta_preconditioner {self.theta_preconditioner!r}")
        if self.trajectory_space not in ("dp", "enumerate"):
            raise ConfigError(f"unknown trajectory_space {self.trajectory_space!r}")


@dataclass
class ClusterModel:
    theta: np.ndarray                 # (D_max, K)
    v: np.ndarray                     # (D_max, N), columns on the simplex
    active: Optional[np.ndarray] = None

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
        if self.theta.shape[0] != self.v.shape[0]:
            raise InvalidArgument("theta and v need one row per cluster")
        if self.active is None:
            self.active = np.ones(self.theta.shape[0], dtype=bool)
        self.active = np.asarray(self.active, dtype=bool)
        if self.active.shape != (self.theta.shape[0],):
            raise InvalidArgument("active mask needs one entry per cluster")

    @property
    def num_clusters_max(self) -> int:
        return self.theta.shape[0]

    @property
    def num_active(self) -> int:
        return int(self.active.sum())

    @property
    def pi(self) -> np.ndarray:
        return self.v.mean(axis=1)

    def hard_assignments(self) -> np.ndarray:
        """Argmax over active rows, as indices into the full cluster table."""
        if not self.active.any():
            raise InvalidState("model has no active clusters")
        masked = np.where(self.active[:, None], self.v, -np.inf)
        return masked.argmax(axis=0)

    def check(self, tol: float = 1e-9) -> None:
        if np.any(self.v < -tol) or np.any(np.abs(self.v.sum(axis=0) - 1.0) > tol):
            raise InvalidState("v columns are not on the simplex")


# --- helpers ------------------------------------------------------------------

def project_simplex_columns(X: np.ndarray) -> np.ndarray:
    """Euclidean projection of every column of ``X`` onto the probability simplex."""
    X = np.asarray(X, dtype=float)
    D = X.shape[0]
    U = -np.sort(-X, axis=0)
    css = np.cumsum(U, axis=0) - 1.0
    ind = np.arange(1, D + 1)[:, None]
    cond = U - css / ind > 0
    rho = D - 1 - np.argmax(cond[::-1], axis=0)
    tau = css[rho, np.arange(X.shape[1])] / (rho + 1)
    return np.maximum(X - tau, 0.0)


def _entropy_term(pi: np.ndarray) -> float:
    nz = pi > 0
    return float(np.sum(pi[nz] * np.log(pi[nz])))


def _spec(config: Optional[MtirlConfig]) -> TrajectorySpaceSpec:
    return TrajectorySpaceSpec("dp" if config is None else config.trajectory_space)


def _start_dist(v_row: np.ndarray, starts: np.ndarray, S: int) -> np.ndarray:
    w = np.bincount(starts, weights=v_row, minlength=S)
    total = w.sum()
    return w / total if total > 0 else np.full(S, 1.0 / S)


def _check_shapes(model: ClusterModel, dataset: Dataset, features: FeatureMap) -> None:
    if model.theta.shape[1] != features.num_features:
        raise InvalidArgument(
            f"theta has {model.theta.shape[1]} columns, features have {features.num_features}")
    if model.v.shape[1] != len(dataset):
        raise InvalidArgument(f"v has {model.v.shape[1]} columns, dataset has {len(dataset)} trajectories")


def _require_active(model: ClusterModel, d: int) -> None:
    if not 0 <= d < model.num_clusters_max:
        raise InvalidArgument(f"cluster {d} out of range")
    if not model.active[d]:
        raise InvalidState(f"cluster {d} is not active")


def per_start_log_partition(mdp: Mdp, features: FeatureMap, theta) -> np.ndarray:
    """``log Z(theta; s)`` for every start state s."""
    return soft_backward(mdp, reward_table(features, theta)).log_z[0]


# --- objective and likelihoods --------------------------------------------------

def objective(model: ClusterModel, dataset: Dataset, mdp: Mdp, features: FeatureMap,
              config: Optional[MtirlConfig] = None) -> float:
    """Cluster-weighted trajectory entropy plus the mixture min-entropy term.

    ``sum_d pi_d H(Pr_d) + sum_d pi_d log pi_d`` over active clusters, where
    ``Pr_d`` is the MaxEnt distribution under ``theta[d]`` started from the
    v-weighted start-state histogram.
    """
    _check_shapes(model, dataset, features)
    spec = _spec(config)
    starts = dataset.start_states()
    pi = model.pi
    total = 0.0
    for d in np.flatnonzero(model.active):
        if pi[d] <= 0:
            continue
        p0 = _start_dist(model.v[d], starts, mdp.num_states)
        total += pi[d] * trajectory_entropy(mdp, features, model.theta[d], spec, start_dist=p0)
    return total + _entropy_term(pi[model.active])


def lagrangian(model: ClusterModel, dataset: Dataset, mdp: Mdp, features: FeatureMap,
               min_entropy_weight: float = 1.0) -> float:
    """The relaxed Lagrangian L(theta, v) described in the module docstring."""
    _check_shapes(model, dataset, features)
    counts = count_matrix(dataset, features)
    starts = dataset.start_states()
    N = len(dataset)
    total = 0.0
    for d in np.flatnonzero(model.active):
        logz = per_start_log_partition(mdp, features, model.theta[d])
        total += model.v[d] @ logz[starts] / N - model.theta[d] @ (model.v[d] @ counts) / N
    return total - min_entropy_weight * _entropy_term(model.pi[model.active])


def _likelihood_logits(model: ClusterModel, counts: np.ndarray, scaled: bool):
    if not model.active.any():
        raise InvalidState("model has no active clusters")
    pi = model.pi
    scale = pi[:, None] if scaled else 1.0
    logits = scale * (model.theta @ counts.T)                 # (D, N)
    with np.errstate(divide="ignore"):
        log_pi = np.where(model.active & (pi > 0), np.log(np.where(pi > 0, pi, 1.0)), -np.inf)
    log_norm = logsumexp(log_pi[:, None] + logits)
    if not np.isfinite(log_norm):
        raise InvalidState("all active clusters have zero weight")
    return logits, log_norm


def cluster_likelihood_matrix(model: ClusterModel, counts: np.ndarray, scaled: bool = True) -> np.ndarray:
    """``P(y_i | c_i = d)`` for every cluster and trajectory in ``counts``.

    ``P = exp(s_d theta_d . phi(y_i)) / Z`` with ``s_d = pi_d`` (``scaled``) or 1
    and ``Z = sum_d pi_d sum_i exp(s_d theta_d . phi(y_i))`` over active
    clusters and the given trajectory set. Rows of inactive clusters are 0.
    Individual entries can exceed 1 when ``pi_d < 1``; the pi-weighted
    total is 1.
    """
    counts = np.asarray(counts, dtype=float)
    logits, log_norm = _likelihood_logits(model, counts, scaled)
    P = np.exp(logits - log_norm)
    P[~model.active] = 0.0
    return P


def cluster_likelihood(model: ClusterModel, d: int, y, features: FeatureMap, dataset: Dataset,
                       scaled: bool = True) -> float:
    """Normalised likelihood of trajectory ``y`` (or dataset index) under cluster d."""
    _require_active(model, d)
    counts = count_matrix(dataset, features)
    phi = counts[int(y)] if isinstance(y, (int, np.integer)) else feature_counts(y, features)
    logits, log_norm = _likelihood_logits(model, counts, scaled)
    s = model.pi[d] if scaled else 1.0
    return float(np.exp(s * model.theta[d] @ phi - log_norm))


def grad_theta(model: ClusterModel, d: int, dataset: Dataset, mdp: Mdp, features: FeatureMap,
               spec: Optional[TrajectorySpaceSpec] = None) -> np.ndarray:
    """``pi_d E_d[phi] - phi_hat_d``: the theta-gradient of L for cluster d."""
    _require_active(model, d)
    _check_shapes(model, dataset, features)
    counts = count_matrix(dataset, features)
    pi_d = model.pi[d]
    phi_hat = model.v[d] @ counts / len(dataset)
    if pi_d <= 0:
        return -phi_hat
    p0 = _start_dist(model.v[d], dataset.start_states(), mdp.num_states)
    _, E = partition_and_expectation(mdp, features, model.theta[d], spec, start_dist=p0)
    return pi_d * E - phi_hat


def grad_v(model: ClusterModel, d: int, i: int, dataset: Dataset, mdp: Mdp, features: FeatureMap,
           v_floor: float = 1e-6, scaled: bool = True) -> float:
    """The printed closed form for ``dL/dv[d, i]``.

    ``(sum_j P(y_j|d) + 1 + (N / v[d, i]) (1 - log Z)) / sum_j v[d, j]``, with v
    entries clamped to ``v_floor`` and Z the normaliser of
    :func:`cluster_likelihood_matrix`. ``mdp`` is accepted for signature
    symmetry with :func:`grad_theta`.
    """
    _require_active(model, d)
    _check_shapes(model, dataset, features)
    counts = count_matrix(dataset, features)
    return float(_printed_grad_v(model, counts, v_floor, scaled)[d, i])


def _printed_grad_v(model: ClusterModel, counts: np.ndarray, v_floor: float, scaled: bool) -> np.ndarray:
    N = counts.shape[0]
    logits, log_norm = _likelihood_logits(model, counts, scaled)
    P = np.exp(logits - log_norm)
    v = np.maximum(model.v, v_floor)
    num = P.sum(axis=1, keepdims=True) + 1.0 + (N / v) * (1.0 - log_norm)
    return num / v.sum(axis=1, keepdims=True)


def assignment_gradient(model: ClusterModel, dataset: Dataset, mdp: Mdp, features: FeatureMap,
                        min_entropy_weight: float = 1.0, v_floor: float = 1e-6) -> np.ndarray:
    """``N * d(-L)/dv``: ``log P_d(y_i) + lam (log pi_d + 1)`` as a ``(D, N)`` table."""
    _check_shapes(model, dataset, features)
    counts = count_matrix(dataset, features)
    starts = dataset.start_states()
    logz = np.stack([per_start_log_partition(mdp, features, th) for th in model.theta])
    return _assignment_gradient(model.theta, model.pi, counts, starts, logz, min_entropy_weight, v_floor)


def _assignment_gradient(theta, pi, counts, starts, logz, lam, v_floor):
    loglik = theta @ counts.T - logz[:, starts]
    return loglik + lam * (np.log(np.maximum(pi, v_floor)) + 1.0)[:, None]


# --- fitting ------------------------------------------------------------------

@dataclass
class FitDiagnostics:
    iterations: int = 0
    converged: bool = False
    objective_trace: list = field(default_factory=list)
    score_trace: list = field(default_factory=list)
    grad_theta_trace: list = field(default_factory=list)
    grad_v_trace: list = field(default_factory=list)
    pi_before_pruning: list = field(default_factory=list)
    num_active: int = 0
    refit_converged: list = field(default_factory=list)
    refit_residuals: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def initial_model(num_clusters: int, num_trajectories: int, num_features: int, seed) -> ClusterModel:
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-0.1, 0.1, size=(num_clusters, num_features))
    v = rng.dirichlet(np.ones(num_clusters), size=num_trajectories).T
    return ClusterModel(theta, v)


def fit(dataset: Dataset, mdp: Mdp, features: FeatureMap, config: Optional[MtirlConfig] = None,
        theta0=None, v0=None, callback=None):
    """Alternate v-ascent and theta-descent, then prune, harden and refit.

    Returns ``(model, diagnostics)``. ``theta0`` / ``v0`` override the seeded
    initialisation (``v0`` columns are projected onto the simplex).
    ``callback(t, theta, v)`` sees copies of every iterate.
    """
    config = config or MtirlConfig()
    N = len(dataset)
    if N < 1:
        raise InvalidArgument("fit needs at least one trajectory")
    features.check_mdp(mdp)
    D, K, S = int(config.d_max), features.num_features, mdp.num_states
    init = initial_model(D, N, K, config.seed)
    theta = init.theta if theta0 is None else np.array(theta0, dtype=float)
    v = init.v if v0 is None else project_simplex_columns(np.array(v0, dtype=float))
    if theta.shape != (D, K) or v.shape != (D, N):
        raise InvalidArgument(f"initial theta must be ({D}, {K}) and v ({D}, {N})")

    counts = count_matrix(dataset, features)
    starts = dataset.start_states()
    phi = features.values
    lam = config.min_entropy_weight
    printed = config.v_gradient == "printed"
    diag = FitDiagnostics()

    def sweep(theta):
        bws = [soft_backward(mdp, phi @ th) for th in theta]
        return bws, np.stack([bw.log_z[0] for bw in bws])

    def record(theta, v, bws, logz):
        pi = v.mean(axis=1)
        H = 0.0
        for d in range(D):
            if pi[d] <= 0:
                continue
            p0 = _start_dist(v[d], starts, S)
            visits, dyn = soft_forward(mdp, bws[d], p0, with_entropy=not mdp.is_deterministic)
            nz = p0 > 0
            h = (-float(p0[nz] @ np.log(p0[nz])) + expected_log_partition(logz[d], p0)
                 - float(np.sum(visits * (phi @ theta[d]))) - dyn)
            H += pi[d] * h
        diag.objective_trace.append(H + _entropy_term(pi))
        loglik = theta @ counts.T - logz[:, starts]
        diag.score_trace.append(float(np.sum(v * loglik)) / N + lam * _entropy_term(pi))

    bws, logz = sweep(theta)
    record(theta, v, bws, logz)
    for t in range(int(config.max_iters)):
        # (a) v-ascent with simplex projection
        pi = v.mean(axis=1)
        if printed:
            gv = _printed_grad_v(ClusterModel(theta, v), counts, config.v_floor,
                                 config.likelihood_form == "scaled")
        else:
            gv = _assignment_gradient(theta, pi, counts, starts, logz, lam, config.v_floor)
        eta_v = step_size(config.lr_v, config.tau, t)
        if config.anneal is not None:
            eta_v *= 1.0 + config.anneal * t
        v_new = project_simplex_columns(v + eta_v * gv)
        v_step = float(np.max(np.abs(v_new - v))) / eta_v
        v = v_new
        # (b) mixture weights
        pi = v.mean(axis=1)
        # (c) theta-descent per cluster at the new v
        gth = np.empty_like(theta)
        for d in range(D):
            phi_hat = v[d] @ counts / N
            if pi[d] > 0:
                visits, _ = soft_forward(mdp, bws[d], _start_dist(v[d], starts, S))
                gth[d] = pi[d] * np.einsum("sa,sak->k", visits, phi) - phi_hat
            else:
                gth[d] = -phi_hat
        g_max = float(np.max(np.abs(gth)))
        diag.grad_theta_trace.append(g_max)
        diag.grad_v_trace.append(v_step)
        step = gth
        if config.theta_preconditioner == "mass":
            step = gth / np.maximum(pi, config.v_floor)[:, None]
        theta = theta - step_size(config.lr_theta, config.tau, t) * step
        bws, logz = sweep(theta)
        record(theta, v, bws, logz)
        if callback is not None:
            callback(t, theta.copy(), v.copy())
        diag.iterations = t + 1
        if g_max < config.tol and v_step < config.tol:
            diag.converged = True
            break

    model = _prune_and_harden(ClusterModel(theta, v), counts, starts, logz, config, diag)
    if config.refit:
        spec = _spec(config)
        theta = model.theta.copy()
        assign = model.hard_assignments()
        for d in np.flatnonzero(model.active):
            res = fit_maxent(dataset.subset(np.flatnonzero(assign == d)), mdp, features, spec,
                             lr0=config.refit_lr, tau=config.refit_tau,
                             max_iters=config.refit_max_iters, grad_tol=config.refit_tol)
            theta[d] = res.weights
            diag.refit_converged.append(bool(res.converged))
            diag.refit_residuals.append(float(res.residual))
        model = ClusterModel(theta, model.v, model.active)
    diag.num_active = model.num_active
    return model, diag


def _prune_and_harden(model: ClusterModel, counts, starts, logz, config: MtirlConfig,
                      diag: FitDiagnostics) -> ClusterModel:
    pi = model.pi
    diag.pi_before_pruning = pi.tolist()
    keep = pi >= config.prune_threshold
    if not keep.any():
        keep[int(np.argmax(pi))] = True
    v = np.where(keep[:, None], model.v, 0.0)
    col = v.sum(axis=0)
    # columns whose mass sat entirely on pruned clusters go to their most likely survivor
    orphan = col <= 0
    if orphan.any():
        loglik = model.theta @ counts[orphan].T - logz[:, starts[orphan]]
        loglik[~keep] = -np.inf
        v[:, orphan] = np.eye(len(keep))[loglik.argmax(axis=0)].T
        col = v.sum(axis=0)
    v = v / col
    assign = np.where(keep[:, None], v, -np.inf).argmax(axis=0)
    hard = np.zeros_like(v)
    hard[assign, np.arange(v.shape[1])] = 1.0
    active = keep & (hard.sum(axis=1) > 0)
    return ClusterModel(model.theta.copy(), hard, active)


def to_fitted(model: ClusterModel, config: MtirlConfig, diag: FitDiagnostics) -> FittedModel:
    """Active rows only, with assignments renumbered to ``0..D_active-1``."""
    ids, compact = compact_labels(model.hard_assignments())
    return FittedModel("me-mtirl", model.theta[ids], compact, model.pi[ids], asdict(config), diag.to_dict())
