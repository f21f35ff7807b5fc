"""Onion-sorting benchmark: a 120-state sorter MDP and an episode simulator.

The planning MDP is deterministic. Inspecting an onion of unknown quality
yields the canonical outcome ``Blemished``; demonstrations still cover
good onions because the start distribution includes states where an
unblemished-looking onion is already in hand. The episode simulator, in
contrast, tracks a batch of real onions with hidden labels and noisy
predictions.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgument
from .mdp_core import FeatureMap, Mdp, Policy
from .domains import deterministic_transition


class OnionLoc(IntEnum):
    OnTable = 0
    Picked = 1
    UnderInspection = 2
    InBin = 3
    ReturnedToTable = 4


class GripperLoc(IntEnum):
    AtTable = 0
    Picked = 1
    UnderInspection = 2
    InBin = 3


class Prediction(IntEnum):
    Blemished = 0
    Unblemished = 1
    Unknown = 2


class SorterAction(IntEnum):
    FocusNewRandom = 0
    Pick = 1
    Inspect = 2
    PlaceInBin = 3
    PlaceOnTable = 4
    RollGripper = 5
    FocusNextPredicted = 6


FEATURE_NAMES = (
    "BlemishedOnTable", "GoodOnTable", "BlemishedInBin", "GoodInBin",
    "MakeMultiplePredictions", "InspectNewOnion", "AvoidNoOp", "PickAlreadyPlaced",
)
NUM_STATES = len(OnionLoc) * len(GripperLoc) * len(Prediction) * 2
NUM_ACTIONS = len(SorterAction)
HORIZON = 12

_ON_TABLE = (OnionLoc.OnTable, OnionLoc.ReturnedToTable)
_HELD = (OnionLoc.Picked, OnionLoc.UnderInspection)


class SorterState(NamedTuple):
    onion_loc: OnionLoc
    gripper_loc: GripperLoc
    prediction: Prediction
    multi_pred_available: bool

    def index(self) -> int:
        return ((int(self.onion_loc) * len(GripperLoc) + int(self.gripper_loc)) * len(Prediction)
                + int(self.prediction)) * 2 + int(bool(self.multi_pred_available))

    @classmethod
    def from_index(cls, idx: int) -> "SorterState":
        if not 0 <= idx < NUM_STATES:
            raise InvalidArgument(f"state index {idx} out of range")
        idx, m = divmod(idx, 2)
        idx, p = divmod(idx, len(Prediction))
        o, g = divmod(idx, len(GripperLoc))
        return cls(OnionLoc(o), GripperLoc(g), Prediction(p), bool(m))


def step(s: SorterState, a: SorterAction) -> SorterState:
    """Deterministic successor in the planning MDP. Inapplicable actions are no-ops."""
    o, g, p, m = s
    held = o in _HELD
    if a == SorterAction.FocusNewRandom and not held:
        return SorterState(OnionLoc.OnTable, g, Prediction.Unknown, m)
    if a == SorterAction.Pick and o in _ON_TABLE:
        return SorterState(OnionLoc.Picked, GripperLoc.Picked, p, m)
    if a == SorterAction.Inspect and o == OnionLoc.Picked:
        seen = Prediction.Blemished if p == Prediction.Unknown else p
        return SorterState(OnionLoc.UnderInspection, GripperLoc.UnderInspection, seen, m)
    if a == SorterAction.PlaceInBin and held:
        return SorterState(OnionLoc.InBin, GripperLoc.InBin, p, m)
    if a == SorterAction.PlaceOnTable and held:
        return SorterState(OnionLoc.ReturnedToTable, GripperLoc.AtTable, p, m)
    if a == SorterAction.RollGripper and not held and not m:
        return SorterState(o, GripperLoc.AtTable, p, True)
    if a == SorterAction.FocusNextPredicted and not held and m:
        return SorterState(OnionLoc.OnTable, g, Prediction.Blemished, True)
    return s


def feature_vector(s: SorterState, a: SorterAction) -> np.ndarray:
    o, g, p, m = s
    nxt = step(s, a)
    on_table = o in _ON_TABLE
    return np.array([
        p == Prediction.Blemished and on_table,
        p == Prediction.Unblemished and on_table,
        p == Prediction.Blemished and o == OnionLoc.InBin,
        p == Prediction.Unblemished and o == OnionLoc.InBin,
        a == SorterAction.RollGripper and nxt != s,
        a == SorterAction.Inspect and o == OnionLoc.Picked and p == Prediction.Unknown,
        nxt != s,
        a == SorterAction.Pick and o == OnionLoc.ReturnedToTable,
    ], dtype=float)


START_STATE = SorterState(OnionLoc.OnTable, GripperLoc.AtTable, Prediction.Unknown, False)

# Start states spread over the decision points of a sorting cycle.
START_STATES = (
    (START_STATE, 0.4),
    (SorterState(OnionLoc.UnderInspection, GripperLoc.UnderInspection, Prediction.Unblemished, False), 0.2),
    (SorterState(OnionLoc.UnderInspection, GripperLoc.UnderInspection, Prediction.Blemished, False), 0.1),
    (SorterState(OnionLoc.ReturnedToTable, GripperLoc.AtTable, Prediction.Unblemished, False), 0.1),
    (SorterState(OnionLoc.Picked, GripperLoc.Picked, Prediction.Unknown, False), 0.1),
    (SorterState(OnionLoc.InBin, GripperLoc.InBin, Prediction.Blemished, False), 0.1),
)


def build_onion_mdp(horizon: int = HORIZON, discount: float = 0.95):
    """Return ``(mdp, features)`` for the sorter: 120 states, 7 actions, 8 features."""
    nxt = np.zeros((NUM_STATES, NUM_ACTIONS), dtype=np.int64)
    phi = np.zeros((NUM_STATES, NUM_ACTIONS, len(FEATURE_NAMES)))
    for i in range(NUM_STATES):
        s = SorterState.from_index(i)
        for a in SorterAction:
            nxt[i, a] = step(s, a).index()
            phi[i, a] = feature_vector(s, a)
    p0 = np.zeros(NUM_STATES)
    for s, w in START_STATES:
        p0[s.index()] += w
    p0 /= p0.sum()
    mdp = Mdp(deterministic_transition(nxt), p0, horizon, discount)
    return mdp, FeatureMap(phi, FEATURE_NAMES)


# Frozen after a search against the behaviour predicates in
# scripts/find_expert_weights.py.
THETA_PICK = np.array([-0.9, -0.3, 0.3, -0.8, -0.5, 0.3, 0.6, -0.9])
THETA_ROLL = np.array([0.3, 0.8, 0.5, -0.7, 1.0, -0.7, 0.9, -0.8])


def expert_weights():
    """``(theta_pick, theta_roll)``: pick-inspect-place and roll-pick-place experts."""
    return THETA_PICK.copy(), THETA_ROLL.copy()


def rollout_actions(mdp: Mdp, policy: Policy, start: SorterState = START_STATE, steps: int = None):
    """Actions of a deterministic policy rolled out in the planning MDP."""
    s = start.index()
    acts = []
    for _ in range(steps or mdp.horizon):
        a = int(policy.actions()[s])
        acts.append(SorterAction(a))
        s = int(mdp.next_state[s, a])
    return acts


# --- episode simulator -------------------------------------------------------

class ConfusionCounts(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class SortEpisodeConfig:
    num_onions: int = 24
    num_blemished: int = 12
    inspect_accuracy: float = 1.0
    roll_accuracy: float = 0.69
    time_budget: int = 39
    seed: int = 1

    def __post_init__(self):
        if not 0 <= self.num_blemished <= self.num_onions:
            raise InvalidArgument("num_blemished must lie in [0, num_onions]")
        if not (0 <= self.inspect_accuracy <= 1 and 0 <= self.roll_accuracy <= 1):
            raise InvalidArgument("accuracies must lie in [0, 1]")
        if self.time_budget < 0:
            raise InvalidArgument("time_budget must be non-negative")


# Defaults above come from scripts/calibrate_sorting.py: with them the two
# experts produce exactly (4, 0, 8, 12) and (8, 4, 4, 8).
CALIBRATED_EPISODE = SortEpisodeConfig()

_TABLE, _RETURNED, _HAND, _BIN = 0, 1, 2, 3


def simulate_sorting(policy, config: SortEpisodeConfig = SortEpisodeConfig(),
                     trace: list = None) -> ConfusionCounts:
    """Run one sorting episode and tally the confusion counts at budget expiry.

    ``policy`` is a :class:`Policy` over the sorter MDP (its most probable
    action is taken in each state) or a callable ``(episode) -> action`` for
    scripted sorters. If ``trace`` is a list, ``(mdp_state, action, focus)``
    triples are appended to it. Randomness comes from independent streams for the batch
    labels, focus order, inspection noise and roll noise.
    """
    if isinstance(policy, Policy):
        if policy.action_probs.shape != (NUM_STATES, NUM_ACTIONS):
            raise InvalidArgument(
                f"policy shape {policy.action_probs.shape} does not match the sorter MDP")
        table = policy.actions()
        choose = lambda sim: int(table[sim.mdp_state().index()])  # noqa: E731
    elif callable(policy):
        choose = policy
    else:
        raise InvalidArgument("policy must be a Policy or a callable")
    sim = SortingEpisode(config)
    for _ in range(config.time_budget):
        a = SorterAction(choose(sim))
        if trace is not None:
            trace.append((sim.mdp_state(), a, sim.focus))
        sim.apply(a)
    return sim.counts()


class SortingEpisode:
    """Mutable state of one simulated sorting episode."""

    def __init__(self, config: SortEpisodeConfig):
        self.config = config
        ss = np.random.SeedSequence(config.seed).spawn(4)
        label_rng, self.focus_rng, self.inspect_rng, self.roll_rng = map(np.random.default_rng, ss)
        n = config.num_onions
        self.blemished = np.zeros(n, dtype=bool)
        self.blemished[label_rng.permutation(n)[:config.num_blemished]] = True
        self.loc = np.full(n, _TABLE)
        self.pred = np.full(n, int(Prediction.Unknown))
        self.inspected = np.zeros(n, dtype=bool)
        self.visited = np.zeros(n, dtype=bool)
        self.gripper = GripperLoc.AtTable
        self.multi = False
        self.queue = []  # roll-predicted blemished onions, in visiting order
        self.focus = None
        self._focus_new()

    def _focus_new(self) -> bool:
        fresh = np.flatnonzero((self.loc == _TABLE) & ~self.visited)
        if len(fresh) == 0:
            return False
        self.focus = int(self.focus_rng.choice(fresh))
        self.visited[self.focus] = True
        return True

    def mdp_state(self) -> SorterState:
        if self.focus is None:
            return SorterState(OnionLoc.OnTable, self.gripper, Prediction.Unknown, self.multi)
        f = self.focus
        loc = self.loc[f]
        if loc == _HAND:
            onion = OnionLoc.UnderInspection if self.gripper == GripperLoc.UnderInspection else OnionLoc.Picked
        else:
            onion = {_TABLE: OnionLoc.OnTable, _RETURNED: OnionLoc.ReturnedToTable, _BIN: OnionLoc.InBin}[loc]
        return SorterState(onion, self.gripper, Prediction(self.pred[f]), self.multi)

    def apply(self, a: SorterAction) -> None:
        f = self.focus
        held = f is not None and self.loc[f] == _HAND
        if a == SorterAction.FocusNewRandom and not held:
            self._focus_new()
        elif a == SorterAction.Pick and f is not None and self.loc[f] in (_TABLE, _RETURNED):
            self.loc[f] = _HAND
            self.gripper = GripperLoc.Picked
        elif a == SorterAction.Inspect and held and self.gripper == GripperLoc.Picked:
            self.gripper = GripperLoc.UnderInspection
            if not self.inspected[f]:
                self.inspected[f] = True
                correct = self.inspect_rng.random() < self.config.inspect_accuracy
                self.pred[f] = self._label_pred(f, correct)
        elif a == SorterAction.PlaceInBin and held:
            self.loc[f] = _BIN
            self.gripper = GripperLoc.InBin
        elif a == SorterAction.PlaceOnTable and held:
            self.loc[f] = _RETURNED
            self.gripper = GripperLoc.AtTable
        elif a == SorterAction.RollGripper and not held and not self.multi:
            self.multi = True
            self.gripper = GripperLoc.AtTable
            rest = np.flatnonzero(self.loc == _TABLE)
            correct = self.roll_rng.random(len(rest)) < self.config.roll_accuracy
            for i, ok in zip(rest, correct):
                if self.pred[i] == Prediction.Unknown:
                    self.pred[i] = self._label_pred(i, ok)
            cand = [int(i) for i in rest if self.pred[i] == Prediction.Blemished]
            self.queue = [cand[j] for j in self.roll_rng.permutation(len(cand))]
        elif a == SorterAction.FocusNextPredicted and not held and self.multi:
            while self.queue:
                nxt = self.queue.pop(0)
                if self.loc[nxt] == _TABLE:
                    self.focus = nxt
                    self.visited[nxt] = True
                    break

    def _label_pred(self, i: int, correct: bool) -> int:
        bad = bool(self.blemished[i]) == bool(correct)
        return int(Prediction.Blemished if bad else Prediction.Unblemished)

    def counts(self) -> ConfusionCounts:
        in_bin = self.loc == _BIN
        tp = int(np.sum(in_bin & self.blemished))
        fp = int(np.sum(in_bin & ~self.blemished))
        fn = int(np.sum(~in_bin & self.blemished))
        tn = int(np.sum(~in_bin & ~self.blemished))
        return ConfusionCounts(tp, fp, fn, tn)


# --- behaviour predicates ----------------------------------------------------

_PLACE = (SorterAction.PlaceInBin, SorterAction.PlaceOnTable)


def is_pick_inspect_place(actions) -> bool:
    """Never rolls; every placement is preceded by Pick then Inspect of that onion,
    and a fresh onion is taken with FocusNewRandom."""
    if SorterAction.RollGripper in actions or SorterAction.FocusNextPredicted in actions:
        return False
    cycle = (SorterAction.FocusNewRandom, SorterAction.Pick, SorterAction.Inspect)
    pos = 1  # the start state already focuses an onion on the table
    placed = 0
    for a in actions:
        if a in _PLACE:
            if pos != 3:
                return False
            pos = 0
            placed += 1
        elif pos < 3 and a == cycle[pos]:
            pos += 1
        else:
            return False
    return placed >= 2


def is_roll_pick_place(actions) -> bool:
    """Rolls before any placement, then cycles FocusNextPredicted -> Pick -> PlaceInBin."""
    if SorterAction.RollGripper not in actions:
        return False
    roll_at = actions.index(SorterAction.RollGripper)
    if any(a in _PLACE for a in actions[:roll_at]):
        return False
    cycle = (SorterAction.FocusNextPredicted, SorterAction.Pick, SorterAction.PlaceInBin)
    rest = actions[roll_at + 1:]
    placed = 0
    for i, a in enumerate(rest):
        if a != cycle[i % 3]:
            return False
        placed += a == SorterAction.PlaceInBin
    return placed >= 2


def expert_behaviour(mdp: Mdp, policy: Policy) -> dict:
    """Which of the two sorting behaviours a deterministic policy exhibits."""
    acts = rollout_actions(mdp, policy)
    held_good = SorterState(OnionLoc.UnderInspection, GripperLoc.UnderInspection,
                            Prediction.Unblemished, False)
    held_bad = held_good._replace(prediction=Prediction.Blemished)
    table = policy.actions()
    return {
        "pick_inspect_place": is_pick_inspect_place(acts),
        "roll_pick_place": is_roll_pick_place(acts),
        "returns_good": table[held_good.index()] == SorterAction.PlaceOnTable,
        "bins_bad": table[held_bad.index()] == SorterAction.PlaceInBin,
    }


def sim_trace_ok(trace, kind: str) -> bool:
    """Check a simulator trace against the behaviour of the named expert."""
    acts = [a for _, a, _ in trace]
    if any(st.onion_loc == OnionLoc.ReturnedToTable and a == SorterAction.Pick for st, a, _ in trace):
        return False
    if kind == "pick_inspect_place":
        if SorterAction.RollGripper in acts or SorterAction.FocusNextPredicted in acts:
            return False
        for st, a, _ in trace:
            if a in _PLACE and st.onion_loc != OnionLoc.UnderInspection:
                return False
        return acts.count(SorterAction.Inspect) >= len(acts) // 4 - 1
    if kind == "roll_pick_place":
        if not acts or acts[0] != SorterAction.RollGripper or SorterAction.Inspect in acts:
            return False
        for st, a, _ in trace:
            if a == SorterAction.PlaceInBin and st.prediction != Prediction.Blemished:
                return False
        return SorterAction.PlaceInBin in acts
    raise InvalidArgument(f"unknown behaviour {kind!r}")
