"""Root-side decision making.

Parents reward children each episode from their trust scores; at epoch end
the root aggregates rewards into a return, classifies the network state,
refreshes tabular Q-values by value iteration over the observed transition
counts, and picks retain-or-modify with an epsilon-greedy rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

from .behavior import SeededRandom
from .dodag import Dodag, NodeId, suspend_node

DENY = "deny"


@dataclass(frozen=True)
class MarlParams:
    """Learning constants for the root's decision module."""

    gamma: float = 0.8
    epsilon: float = 0.2
    episodes_per_epoch: int = 10
    value_iteration_tolerance: float = 1e-9

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.episodes_per_epoch < 1:
            raise ValueError("episodes_per_epoch must be at least 1")
        if self.value_iteration_tolerance <= 0:
            raise ValueError("value_iteration_tolerance must be positive")


class DodagState(Enum):
    HIGH_RETURN = "high_return"
    LOW_RETURN = "low_return"


class Action(Enum):
    RETAIN = "retain"
    MODIFY = "modify"


class StateActionPair(NamedTuple):
    state: DodagState
    action: Action


# Fixed order used for deterministic argmax tie-breaking.
PAIR_ORDER: tuple[StateActionPair, ...] = (
    StateActionPair(DodagState.HIGH_RETURN, Action.RETAIN),
    StateActionPair(DodagState.LOW_RETURN, Action.MODIFY),
    StateActionPair(DodagState.LOW_RETURN, Action.RETAIN),
    StateActionPair(DodagState.HIGH_RETURN, Action.MODIFY),
)

# The two pairs a well-run network should mostly occupy.
OPTIMAL_PAIRS = frozenset(
    {
        StateActionPair(DodagState.HIGH_RETURN, Action.RETAIN),
        StateActionPair(DodagState.LOW_RETURN, Action.MODIFY),
    }
)


class JoinEvent(Enum):
    EXISTING = "existing"
    NEW_JOINER = "new_joiner"
    PARENT_CHANGE = "parent_change"


@dataclass
class QTable:
    """Q-values plus the observed (pair -> next state) transition counts."""

    q: dict[StateActionPair, float] = field(
        default_factory=lambda: {pair: 0.0 for pair in PAIR_ORDER}
    )
    transition_counts: dict[tuple[StateActionPair, DodagState], int] = field(
        default_factory=dict
    )
    last_chosen: Optional[StateActionPair] = None

    def record_transition(self, pair: StateActionPair, next_state: DodagState) -> None:
        key = (pair, next_state)
        self.transition_counts[key] = self.transition_counts.get(key, 0) + 1


@dataclass
class EpochRecord:
    epoch: int
    return_value: int
    n_nonroot: int
    state: DodagState
    chosen: StateActionPair
    explored: bool
    removed_nodes: list[NodeId] = field(default_factory=list)


def episode_reward(trust: float, theta: float, event: JoinEvent):
    """Reward policy a parent applies to one child for one episode.

    Returns DENY for a rejected joiner, otherwise an integer reward.
    """
    if not 0.0 <= trust <= 1.0:
        raise ValueError("trust must lie in [0, 1]")
    if event is JoinEvent.PARENT_CHANGE:
        return 0
    if trust < theta:
        return DENY if event is JoinEvent.NEW_JOINER else -1
    return 0 if event is JoinEvent.NEW_JOINER else 1


def return_threshold(n_nonroot: int) -> int:
    return math.ceil(n_nonroot / 2)


def aggregate_return(dodag: Dodag) -> tuple[int, DodagState]:
    """Sum the latest rewards of all active non-root nodes and classify.

    An empty network counts as low return so a bare root never reads as
    a healthy state.
    """
    members = dodag.active_nonroot()
    if not members:
        return 0, DodagState.LOW_RETURN
    total = 0
    for node in members:
        entry = dodag.tables[node.parent].entries.get(node.id)
        if entry is None:
            raise RuntimeError(
                f"integrity error: node {node.id} has no reward entry "
                f"under parent {node.parent}"
            )
        total += entry.reward
    state = (
        DodagState.HIGH_RETURN
        if total >= return_threshold(len(members))
        else DodagState.LOW_RETURN
    )
    return total, state


def expected_reward(current: DodagState, nxt: DodagState, action: Action) -> int:
    """Root-level reward for an observed state transition under an action.

    State-crossing transitions credit or debit the action taken; staying in
    the same state carries no signal and earns 0.
    """
    if current is nxt:
        return 0
    if action is Action.RETAIN:
        return 1 if nxt is DodagState.HIGH_RETURN else -1
    return 1 if nxt is DodagState.LOW_RETURN else -1


def transition_probabilities(
    qtable: QTable,
) -> dict[StateActionPair, dict[DodagState, float]]:
    """Estimate p(next state | pair) with add-one smoothing over both states."""
    out: dict[StateActionPair, dict[DodagState, float]] = {}
    for pair in PAIR_ORDER:
        counts = {
            s: qtable.transition_counts.get((pair, s), 0) for s in DodagState
        }
        total = sum(counts.values()) + 2
        out[pair] = {s: (counts[s] + 1) / total for s in DodagState}
    return out


def update_q(qtable: QTable, params: MarlParams) -> QTable:
    """Value-iterate the four Q-values to their fixed point.

    Bellman backup over the smoothed transition estimates; converges since
    gamma < 1, with |Q| bounded by 1/(1 - gamma).
    """
    probs = transition_probabilities(qtable)
    q = dict(qtable.q)
    for _ in range(100_000):
        best = {
            s: max(q[StateActionPair(s, a)] for a in Action) for s in DodagState
        }
        delta = 0.0
        new_q = {}
        for pair in PAIR_ORDER:
            value = sum(
                p * (expected_reward(pair.state, nxt, pair.action) + params.gamma * best[nxt])
                for nxt, p in probs[pair].items()
            )
            delta = max(delta, abs(value - q[pair]))
            new_q[pair] = value
        q = new_q
        if delta < params.value_iteration_tolerance:
            break
    qtable.q = q
    return qtable


def epsilon_greedy_select(
    qtable: QTable, rng: SeededRandom, epsilon: float
) -> tuple[StateActionPair, bool]:
    """Pick the best-valued pair, or explore one of the other three.

    Ties resolve by the fixed PAIR_ORDER. The action component of the
    returned pair is what the root executes.
    """
    best = max(PAIR_ORDER, key=lambda pair: qtable.q[pair])
    # max() already honors PAIR_ORDER on exact ties (first maximum wins)
    if rng.random() < epsilon:
        others = [pair for pair in PAIR_ORDER if pair != best]
        return rng.choice(others), True
    return best, False


def modify_dodag(dodag: Dodag) -> tuple[Dodag, list[NodeId]]:
    """Suspend every active non-root node whose latest reward is -1.

    Children of a removed intermediary are re-homed to its parent before
    the removal, carrying their routing entries with them, so the tree
    invariant survives each step.
    """
    removed: list[NodeId] = []
    while True:
        target = None
        for node in sorted(dodag.active_nonroot(), key=lambda n: n.id):
            entry = dodag.tables[node.parent].entries.get(node.id)
            if entry is not None and entry.reward == -1:
                target = node.id
                break
        if target is None:
            break
        suspend_node(dodag, target)
        removed.append(target)
    return dodag, removed


def decide_epoch(
    dodag: Dodag, qtable: QTable, params: MarlParams, rng: SeededRandom
) -> EpochRecord:
    """Close out an epoch: classify, learn, choose, and act on the DODAG."""
    ret, state = aggregate_return(dodag)
    n_nonroot = len(dodag.active_nonroot())
    if qtable.last_chosen is not None:
        qtable.record_transition(qtable.last_chosen, state)
    update_q(qtable, params)
    chosen, explored = epsilon_greedy_select(qtable, rng, params.epsilon)
    qtable.last_chosen = chosen
    removed: list[NodeId] = []
    if chosen.action is Action.MODIFY:
        _, removed = modify_dodag(dodag)
    return EpochRecord(
        epoch=dodag.epoch_index,
        return_value=ret,
        n_nonroot=n_nonroot,
        state=state,
        chosen=chosen,
        explored=explored,
        removed_nodes=removed,
    )
