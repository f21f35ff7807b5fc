import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtirl.errors import InvalidArgument
from mtirl.evaluation import greedy_for, precision_recall
from mtirl.mdp_core import Policy
from mtirl.onion_domain import (CALIBRATED_EPISODE, NUM_ACTIONS, NUM_STATES, START_STATE,
                                ConfusionCounts, GripperLoc, OnionLoc, Prediction, SortEpisodeConfig,
                                SorterAction, SorterState, expert_behaviour, feature_vector,
                                is_pick_inspect_place, is_roll_pick_place, rollout_actions,
                                sim_trace_ok, simulate_sorting, step)

A = SorterAction
states = st.integers(0, NUM_STATES - 1).map(SorterState.from_index)
actions = st.sampled_from(list(SorterAction))


def test_sizes(onion):
    mdp, f, W = onion
    assert (mdp.num_states, mdp.num_actions, f.num_features) == (120, 7, 8)
    assert mdp.is_deterministic
    assert W.shape == (2, 8)


@given(st.integers(0, NUM_STATES - 1))
def test_state_index_round_trip(i):
    assert SorterState.from_index(i).index() == i


def test_bad_state_index():
    with pytest.raises(InvalidArgument):
        SorterState.from_index(NUM_STATES)


@given(states, actions)
def test_features_are_binary(s, a):
    assert set(np.unique(feature_vector(s, a))) <= {0.0, 1.0}


@given(states, actions)
def test_avoid_noop_marks_state_change(s, a):
    assert feature_vector(s, a)[6] == float(step(s, a) != s)


def test_pick_inspect_place_cycle():
    s = START_STATE
    s = step(s, A.Pick)
    assert s.onion_loc == OnionLoc.Picked and s.gripper_loc == GripperLoc.Picked
    s = step(s, A.Inspect)
    assert s.onion_loc == OnionLoc.UnderInspection and s.prediction == Prediction.Blemished
    s = step(s, A.PlaceInBin)
    assert s.onion_loc == OnionLoc.InBin
    s = step(s, A.FocusNewRandom)
    assert s == START_STATE._replace(gripper_loc=GripperLoc.InBin)


def test_roll_is_one_shot():
    s = step(START_STATE, A.RollGripper)
    assert s.multi_pred_available
    assert step(s, A.RollGripper) == s
    assert step(START_STATE, A.FocusNextPredicted) == START_STATE
    assert step(s, A.FocusNextPredicted).prediction == Prediction.Blemished


def test_experts_exhibit_their_behaviour(onion):
    mdp, f, W = onion
    pick = expert_behaviour(mdp, greedy_for(mdp, f, W[0]))
    roll = expert_behaviour(mdp, greedy_for(mdp, f, W[1]))
    assert pick["pick_inspect_place"] and not pick["roll_pick_place"]
    assert roll["roll_pick_place"] and not roll["pick_inspect_place"]
    assert pick["returns_good"] and pick["bins_bad"]


def test_behaviour_predicates_on_scripts():
    pip = [A.Pick, A.Inspect, A.PlaceInBin, A.FocusNewRandom, A.Pick, A.Inspect, A.PlaceOnTable]
    assert is_pick_inspect_place(pip)
    assert not is_pick_inspect_place([A.Pick, A.PlaceInBin])
    rpp = [A.RollGripper, A.FocusNextPredicted, A.Pick, A.PlaceInBin, A.FocusNextPredicted, A.Pick,
           A.PlaceInBin]
    assert is_roll_pick_place(rpp)
    assert not is_roll_pick_place(pip)


def test_calibrated_expert_rows(onion):
    mdp, f, W = onion
    assert simulate_sorting(greedy_for(mdp, f, W[0]), CALIBRATED_EPISODE) == ConfusionCounts(4, 0, 8, 12)
    assert simulate_sorting(greedy_for(mdp, f, W[1]), CALIBRATED_EPISODE) == ConfusionCounts(8, 4, 4, 8)


def test_expert_traces_match_behaviour(onion):
    mdp, f, W = onion
    for w, kind in zip(W, ("pick_inspect_place", "roll_pick_place")):
        trace = []
        simulate_sorting(greedy_for(mdp, f, w), CALIBRATED_EPISODE, trace)
        assert len(trace) == CALIBRATED_EPISODE.time_budget
        assert sim_trace_ok(trace, kind)


@given(st.integers(0, 10_000), st.integers(1, 30), st.floats(0, 1), st.integers(0, 60))
def test_confusion_counts_conserve_onions(seed, n, acc, budget):
    rng = np.random.default_rng(seed)
    policy = Policy(rng.dirichlet(np.ones(NUM_ACTIONS), size=NUM_STATES))
    cfg = SortEpisodeConfig(num_onions=n, num_blemished=int(rng.integers(0, n + 1)),
                            roll_accuracy=acc, time_budget=budget, seed=seed)
    c = simulate_sorting(policy, cfg)
    assert min(c) >= 0
    assert sum(c) == n
    assert c.tp + c.fn == cfg.num_blemished


@given(st.integers(0, 10_000))
def test_simulation_is_deterministic(seed):
    calls = iter(np.random.default_rng(seed).integers(0, NUM_ACTIONS, size=80))
    script = list(calls)
    run = lambda: simulate_sorting(lambda sim, it=iter(script): next(it), SortEpisodeConfig(seed=seed))  # noqa: E731
    assert run() == run()


def test_idle_sorter_bins_nothing():
    c = simulate_sorting(lambda sim: A.FocusNewRandom, CALIBRATED_EPISODE)
    assert c == ConfusionCounts(0, 0, 12, 12)


def test_simulator_rejects_bad_inputs():
    with pytest.raises(InvalidArgument):
        SortEpisodeConfig(num_onions=3, num_blemished=4)
    with pytest.raises(InvalidArgument):
        simulate_sorting(Policy(np.full((3, 7), 1 / 7)))
    with pytest.raises(InvalidArgument):
        simulate_sorting("not a policy")


def test_rollout_length(onion):
    mdp, f, W = onion
    assert len(rollout_actions(mdp, greedy_for(mdp, f, W[0]))) == mdp.horizon


def test_precision_recall_of_expert_rows():
    assert precision_recall(ConfusionCounts(4, 0, 8, 12)) == pytest.approx((100.0, 100 / 3))
    P, R = precision_recall(ConfusionCounts(8, 4, 4, 8))
    assert round(P) == 67 and round(R) == 67
