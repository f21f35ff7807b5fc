"""Confusion counts, precision and recall of expert and learned sorters.

Fits the multi-task learner on a 64-trajectory onion dataset per seed, maps
each learned cluster to an expert by minimum ILE, and runs every greedy
policy through the calibrated sorting episode.

    python3 scripts/sorting_table.py [--seeds 5]
"""
import argparse

import numpy as np

from mtirl.evaluation import greedy_for, matched_ile, precision_recall
from mtirl.me_mtirl import MtirlConfig, fit, to_fitted
from mtirl.onion_domain import CALIBRATED_EPISODE, build_onion_mdp, expert_weights, simulate_sorting
from mtirl.trajectories import generate_mixed_dataset

NAMES = ("pick-inspect-place", "roll-pick-place")


def row(label, counts):
    P, R = precision_recall(counts)
    print(f"{label:36s} {counts.tp:3d} {counts.fp:3d} {counts.fn:3d} {counts.tn:3d} {P:6.1f} {R:6.1f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--n", type=int, default=64)
    args = ap.parse_args()
    mdp, f = build_onion_mdp()
    W = np.stack(expert_weights())
    print(f"{'sorter':36s} {'TP':>3s} {'FP':>3s} {'FN':>3s} {'TN':>3s} {'P':>6s} {'R':>6s}")
    for name, w in zip(NAMES, W):
        row(f"expert {name}", simulate_sorting(greedy_for(mdp, f, w), CALIBRATED_EPISODE))
    for seed in range(args.seeds):
        ds = generate_mixed_dataset(mdp, f, W, [0.5, 0.5], args.n, rng_seed=[2024, seed])
        cfg = MtirlConfig(seed=seed)
        model, diag = fit(ds, mdp, f, cfg)
        fm = to_fitted(model, cfg, diag)
        _, mapping = matched_ile(ds, fm.theta, mdp, f)
        for true, learned in mapping.items():
            counts = simulate_sorting(greedy_for(mdp, f, fm.theta[learned]), CALIBRATED_EPISODE)
            row(f"seed {seed} learned {NAMES[true]}", counts)


if __name__ == "__main__":
    main()
