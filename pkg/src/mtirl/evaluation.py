"""Metrics and the dataset-size sweep.

ILE compares, under the true reward of each demonstration's expert, the
value of the expert's greedy policy with the value of the greedy policy of
the learned reward assigned to that expert.
"""
from __future__ import annotations

import csv
import io
import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, InvalidArgument
from .mdp_core import FeatureMap, Mdp, greedy_policy, policy_evaluation, value_iteration
from .modelio import FittedModel
from .onion_domain import ConfusionCounts
from .trajectories import Dataset, generate_mixed_dataset


@dataclass(frozen=True)
class IleSpec:
    p_norm: float = 2.0
    value_mode: str = "episodic"

    def __post_init__(self):
        if not self.p_norm >= 1:
            raise ConfigError("p_norm must be >= 1")
        if self.value_mode not in ("discounted", "episodic"):
            raise ConfigError(f"unknown value_mode {self.value_mode!r}")


def greedy_for(mdp: Mdp, features: FeatureMap, theta):
    _, Q = value_iteration(mdp, features, theta)
    return greedy_policy(Q)


def value_gap(mdp: Mdp, features: FeatureMap, theta_true, theta_learned, spec: IleSpec = IleSpec()) -> float:
    """``|| V^{greedy(true)} - V^{greedy(learned)} ||_p`` under the true reward."""
    episodic = spec.value_mode == "episodic"
    V_star = policy_evaluation(mdp, features, theta_true, greedy_for(mdp, features, theta_true), episodic=episodic)
    V_l = policy_evaluation(mdp, features, theta_true, greedy_for(mdp, features, theta_learned), episodic=episodic)
    return float(np.linalg.norm(V_star - V_l, ord=spec.p_norm))


def _require_truth(dataset: Dataset):
    if dataset.true_labels is None or dataset.true_weights is None:
        raise InvalidArgument("ILE needs true_labels and true_weights")
    return dataset.true_labels, dataset.true_weights


def ile(dataset: Dataset, learned, mdp: Mdp, features: FeatureMap, spec: IleSpec = IleSpec()) -> float:
    """Mean value gap over trajectories, given one learned weight row per trajectory."""
    labels, W = _require_truth(dataset)
    learned = np.atleast_2d(np.asarray(learned, dtype=float))
    if learned.shape != (len(dataset), features.num_features):
        raise InvalidArgument(f"need one learned weight row per trajectory, got {learned.shape}")
    cache = {}
    total = 0.0
    for c, th in zip(labels, learned):
        key = (int(c), th.tobytes())
        if key not in cache:
            cache[key] = value_gap(mdp, features, W[c], th, spec)
        total += cache[key]
    return total / len(dataset)


def matched_ile(dataset: Dataset, cluster_weights, mdp: Mdp, features: FeatureMap,
                spec: IleSpec = IleSpec()):
    """ILE after mapping every true cluster to the learned cluster that minimises the total.

    Several true clusters may map to the same learned cluster when fewer
    were learned. Returns ``(ile, mapping)`` with ``mapping[true] = learned``.
    """
    labels, W = _require_truth(dataset)
    L = np.atleast_2d(np.asarray(cluster_weights, dtype=float))
    true_ids = np.unique(labels)
    n = np.array([np.sum(labels == c) for c in true_ids])
    gaps = np.array([[value_gap(mdp, features, W[c], th, spec) for th in L] for c in true_ids])
    best, best_map = np.inf, None
    for choice in itertools.product(range(len(L)), repeat=len(true_ids)):
        total = float(np.sum(n * gaps[np.arange(len(true_ids)), choice]))
        if total < best - 1e-12:
            best, best_map = total, choice
    mapping = {int(c): int(j) for c, j in zip(true_ids, best_map)}
    return best / len(dataset), mapping


def assignment_accuracy(pred, truth) -> float:
    """Fraction of trajectories labelled correctly under the best one-to-one label matching."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.size == 0:
        raise InvalidArgument("label vectors must be non-empty and equally long")
    p_ids, p = np.unique(pred, return_inverse=True)
    t_ids, t = np.unique(truth, return_inverse=True)
    table = np.zeros((len(p_ids), len(t_ids)))
    np.add.at(table, (p, t), 1.0)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / pred.size)


def precision_recall(counts: ConfusionCounts):
    """Bin precision and recall in percent.

    An empty bin scores precision 100 when nothing blemished was missed and 0
    otherwise.
    """
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    if min(tp, fp, fn, counts.tn) < 0:
        raise InvalidArgument("confusion counts must be non-negative")
    if tp + fp == 0:
        P = 100.0 if fn == 0 else 0.0
    else:
        P = 100.0 * tp / (tp + fp)
    R = 100.0 * tp / (tp + fn) if tp + fn > 0 else 100.0
    return P, R


# --- sweep ------------------------------------------------------------------------

CSV_COLUMNS = ("kind", "method", "size", "run", "ile", "ile_std", "clusters", "accuracy",
               "converged", "wall_time", "status")


@dataclass
class ExperimentSpec:
    dataset_sizes: tuple = (8, 16, 32, 64)
    runs_per_point: int = 5
    methods: tuple = ("me-mtirl", "dpm-birl", "em-mlirl")
    base_seed: int = 0
    domain: str = "onion"
    mix: Optional[tuple] = None          # None: uniform over the domain's experts
    expert: str = "boltzmann"
    expert_beta: float = 50.0
    p_norm: float = 2.0
    value_mode: str = "episodic"
    record_timing: bool = True
    method_params: dict = field(default_factory=dict)

    def __post_init__(self):
        from .methods import METHODS
        sizes = [int(s) for s in self.dataset_sizes]
        if not sizes or any(s < 1 for s in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("dataset_sizes must be positive and strictly increasing")
        self.dataset_sizes = tuple(sizes)
        if int(self.runs_per_point) < 1:
            raise ConfigError("runs_per_point must be >= 1")
        self.methods = tuple(self.methods)
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown method(s) {bad}; expected a subset of {list(METHODS)}")
        unknown = sorted(set(self.method_params) - set(METHODS))
        if unknown:
            raise ConfigError(f"method_params has unknown method(s) {unknown}")
        IleSpec(self.p_norm, self.value_mode)

    @property
    def ile_spec(self) -> IleSpec:
        return IleSpec(self.p_norm, self.value_mode)


def run_seed(base_seed: int, size: int, run: int, salt: int = 0) -> int:
    return int(np.random.SeedSequence([base_seed, size, run, salt]).generate_state(1)[0])


def run_one(spec: ExperimentSpec, method: str, size: int, run: int) -> dict:
    """Fit one method on one generated dataset; failures become flagged rows."""
    from .domains import get_domain
    from .methods import METHODS, converged, fit_method, make_config
    row = {"kind": "run", "method": method, "size": size, "run": run}
    start = time.perf_counter()
    try:
        mdp, features, W = get_domain(spec.domain)
        mix = np.full(len(W), 1.0 / len(W)) if spec.mix is None else np.asarray(spec.mix, dtype=float)
        ds = generate_mixed_dataset(mdp, features, W, mix, size, rng_seed=[spec.base_seed, size, run],
                                    expert=spec.expert, beta=spec.expert_beta)
        cfg = make_config(method, spec.method_params.get(method),
                          seed=run_seed(spec.base_seed, size, run, 1 + METHODS.index(method)))
        model = fit_method(method, ds, mdp, features, cfg)
        value, _ = matched_ile(ds, model.theta, mdp, features, spec.ile_spec)
        row.update(ile=value, clusters=model.num_clusters,
                   accuracy=assignment_accuracy(model.assignments, ds.true_labels),
                   converged=int(converged(model)), status="ok")
    except Exception as exc:  # a failed run is recorded, never fatal for the sweep
        row.update(status=f"failed:{type(exc).__name__}")
    row["wall_time"] = time.perf_counter() - start if spec.record_timing else None
    return row


def aggregate(rows: Sequence[dict]) -> list:
    out = []
    keys = list(dict.fromkeys((r["method"], r["size"]) for r in rows))
    for method, size in keys:
        ok = [r for r in rows if r["method"] == method and r["size"] == size and r["status"] == "ok"]
        agg = {"kind": "mean", "method": method, "size": size, "run": None,
               "status": f"ok={len(ok)}"}
        if ok:
            iles = np.array([r["ile"] for r in ok])
            agg.update(ile=float(iles.mean()), ile_std=float(iles.std(ddof=1)) if len(ok) > 1 else 0.0,
                       clusters=float(np.mean([r["clusters"] for r in ok])),
                       accuracy=float(np.mean([r["accuracy"] for r in ok])),
                       converged=float(np.mean([r["converged"] for r in ok])))
            times = [r["wall_time"] for r in ok if r.get("wall_time") is not None]
            agg["wall_time"] = float(np.mean(times)) if times else None
        out.append(agg)
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_csv(text: str) -> list:
    return list(csv.DictReader(io.StringIO(text)))


def _run_task(args):
    return run_one(*args)


def run_experiment(spec: ExperimentSpec, out_path=None, jobs: int = 1, progress=None) -> list:
    """Run the sweep. Rows are ordered by (method, size, run), followed by one
    mean/std row per (method, size). Writes CSV to ``out_path`` if given."""
    tasks = [(spec, m, s, r) for m in spec.methods for s in spec.dataset_sizes
             for r in range(spec.runs_per_point)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_task, tasks))
    else:
        rows = []
        for t in tasks:
            rows.append(run_one(*t))
            if progress is not None:
                progress(rows[-1])
    rows.sort(key=lambda r: (spec.methods.index(r["method"]), r["size"], r["run"]))
    rows = rows + aggregate(rows)
    if out_path is not None:
        from pathlib import Path
        Path(out_path).write_text(rows_to_csv(rows))
    return rows


def spec_to_dict(spec: ExperimentSpec) -> dict:
    d = asdict(spec)
    d["dataset_sizes"] = list(spec.dataset_sizes)
    d["methods"] = list(spec.methods)
    return d
