import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtirl.domains import random_stochastic_mdp, toy_chain
from mtirl.errors import DataError, InvalidArgument
from mtirl.mdp_core import FeatureMap, Policy
from mtirl.onion_domain import SorterAction, SorterState, START_STATE, feature_vector, step
from mtirl.trajectories import (Dataset, Trajectory, count_matrix, dataset_to_lines,
                                empirical_cluster_feature_expectation, feature_counts,
                                generate_mixed_dataset, load_dataset, parse_dataset_lines,
                                sample_trajectory, save_dataset)


def test_feature_counts_double_visit():
    phi = np.zeros((2, 2, 3))
    phi[1, 0] = [1, 1, 0]
    f = FeatureMap(phi)
    y = Trajectory([1, 0, 1], [0, 1, 0])
    assert feature_counts(y, f).tolist() == [2, 2, 0]
    assert feature_counts(Trajectory([], []), f).tolist() == [0, 0, 0]


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 2)), min_size=1, max_size=12),
       st.integers(0, 12), st.integers(0, 1000))
def test_feature_counts_additive(steps, cut, seed):
    phi = (np.random.default_rng(seed).random((4, 3, 5)) < 0.5).astype(float)
    f = FeatureMap(phi)
    s, a = zip(*steps)
    y = Trajectory(s, a)
    cut = min(cut, len(y))
    left, right = Trajectory(s[:cut], a[:cut]), Trajectory(s[cut:], a[cut:])
    assert np.array_equal(feature_counts(left + right, f), feature_counts(y, f))
    assert np.array_equal(feature_counts(left, f) + feature_counts(right, f), feature_counts(y, f))


def test_onion_expert_counts_match_step_tally(onion):
    mdp, f, W = onion
    ds = generate_mixed_dataset(mdp, f, W, [0.5, 0.5], 6, rng_seed=3)
    for y in ds.trajectories:
        tally = np.zeros(8)
        for s, a in zip(y.states, y.actions):
            tally += feature_vector(SorterState.from_index(int(s)), SorterAction(int(a)))
        assert np.array_equal(tally, feature_counts(y, f))
        assert np.all((tally >= 0) & (tally <= mdp.horizon))


def test_sample_trajectory_deterministic_rollout():
    mdp, _ = toy_chain(horizon=5)
    pol = Policy(np.array([[0.0, 1.0], [1.0, 0.0]]), kind="deterministic")
    y = sample_trajectory(mdp, pol, 0)
    assert y.states.tolist() == [0, 1, 1, 1, 1]
    assert y.actions.tolist() == [1, 0, 0, 0, 0]


@given(st.integers(0, 2**32 - 1))
def test_sample_trajectory_same_seed_same_output(seed):
    mdp, _ = random_stochastic_mdp(4, 2, 2, 6, 1)
    pol = Policy(np.full((4, 2), 0.5))
    y1, y2 = sample_trajectory(mdp, pol, seed), sample_trajectory(mdp, pol, seed)
    assert y1 == y2
    y1.validate(mdp)


def test_state_visit_frequencies_match_chain_marginals():
    mdp, _ = random_stochastic_mdp(4, 2, 2, 5, 7)
    probs = np.random.default_rng(1).dirichlet(np.ones(2), size=4)
    pol = Policy(probs)
    n = 10_000
    counts = np.zeros((5, 4))
    for i in range(n):
        y = sample_trajectory(mdp, pol, i)
        counts[np.arange(5), y.states] += 1
    P = np.einsum("sa,sat->st", probs, mdp.transition)
    marg = [mdp.start_dist]
    for _ in range(4):
        marg.append(marg[-1] @ P)
    assert np.max(np.abs(counts / n - np.array(marg))) < 0.02


def test_trajectory_validate_rejects_impossible_step():
    mdp, _ = toy_chain(horizon=2)
    with pytest.raises(InvalidArgument):
        Trajectory([0, 1], [0, 0]).validate(mdp)   # stay keeps state 0
    with pytest.raises(InvalidArgument):
        Trajectory([0], [0]).validate(mdp)


def test_mix_one_zero_gives_single_label(onion):
    mdp, f, W = onion
    ds = generate_mixed_dataset(mdp, f, W, [1.0, 0.0], 16, rng_seed=0)
    assert set(ds.true_labels.tolist()) == {0}


def test_label_proportions_within_binomial_interval(onion):
    from scipy.stats import binom
    mdp, f, W = onion
    ds = generate_mixed_dataset(mdp, f, W, [0.5, 0.5], 64, rng_seed=11)
    lo, hi = binom.interval(0.99, 64, 0.5)
    assert lo <= np.sum(ds.true_labels == 0) <= hi


def test_generate_rejects_dimension_mismatch(onion):
    mdp, f, W = onion
    with pytest.raises(InvalidArgument):
        generate_mixed_dataset(mdp, f, W[:, :3], [0.5, 0.5], 4)
    with pytest.raises(InvalidArgument):
        generate_mixed_dataset(mdp, f, W, [0.5, 0.4], 4)


def test_generate_is_pure(onion):
    mdp, f, W = onion
    a = generate_mixed_dataset(mdp, f, W, [0.3, 0.7], 10, rng_seed=5)
    b = generate_mixed_dataset(mdp, f, W, [0.3, 0.7], 10, rng_seed=5)
    c = generate_mixed_dataset(mdp, f, W, [0.3, 0.7], 10, rng_seed=6)
    assert a == b
    assert a != c


def test_dataset_round_trip(onion, tmp_path):
    mdp, f, W = onion
    ds = generate_mixed_dataset(mdp, f, W, [0.5, 0.5], 12, rng_seed=2)
    path = tmp_path / "d.jsonl"
    save_dataset(path, ds, mdp.num_states, mdp.num_actions, f.num_features)
    back, header = load_dataset(path)
    assert back == ds
    assert header["horizon"] == mdp.horizon and header["num_features"] == 8


def test_parse_errors_name_the_line(onion):
    mdp, f, W = onion
    ds = generate_mixed_dataset(mdp, f, W, [0.5, 0.5], 3, rng_seed=2)
    lines = dataset_to_lines(ds, mdp.num_states, mdp.num_actions, 8)
    lines[2] = '{"states": [1, 2], "actions": [0, 0]}'
    with pytest.raises(DataError, match="src:3"):
        parse_dataset_lines(lines, "src")
    with pytest.raises(DataError, match="src:1"):
        parse_dataset_lines(["not json"], "src")


def test_cluster_feature_expectation_cases():
    counts = np.array([[1.0, 2.0], [3.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    v = np.array([[1, 0, 1, 0], [0, 1, 0, 1]], dtype=float)
    assert empirical_cluster_feature_expectation(counts, np.zeros((1, 4)), 0).tolist() == [0, 0]
    # hand tally: cluster 0 = rows 0 and 2 -> (1, 3) / 4
    assert np.allclose(empirical_cluster_feature_expectation(counts, v, 0), [0.25, 0.75])
    assert np.allclose(empirical_cluster_feature_expectation(counts, v, 1), [1.25, 0.5])
    assert np.allclose(empirical_cluster_feature_expectation(counts[:1], np.ones((1, 1)), 0), counts[0])
    with pytest.raises(InvalidArgument):
        empirical_cluster_feature_expectation(counts, 2 * v, 0)


def test_count_matrix_rows_match_feature_counts(onion):
    mdp, f, W = onion
    ds = generate_mixed_dataset(mdp, f, W, [0.5, 0.5], 5, rng_seed=9)
    C = count_matrix(ds, f)
    for i, y in enumerate(ds.trajectories):
        assert np.array_equal(C[i], feature_counts(y, f))
