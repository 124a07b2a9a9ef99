"""Behavioral trust scoring.

Direct trust maps a child's cumulative misbehavior percentage through an
Inverse Gompertz curve; indirect trust aggregates prior parents' scores
with exponentially decaying recency weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, TYPE_CHECKING

if TYPE_CHECKING:
    from .dodag import NodeId, RoutingTable

# Recency weights below this are treated as negligible and dropped.
WEIGHT_FLOOR = 0.01


@dataclass(frozen=True)
class TrustParams:
    """Constants of the trust model.

    asymptote:    upper asymptote of the Inverse Gompertz curve (fixed at 1.0
                  so trust lives in [0, 1]).
    displacement: shifts the curve along the misbehavior axis; higher values
                  tolerate more misbehavior before trust starts to drop.
    decay:        steepness of the drop once it starts.
    theta:        trust threshold separating acceptable from unacceptable.
    alpha:        per-episode decay rate of indirect-trust recency weights.
    """

    asymptote: float = 1.0
    displacement: float = 150.0
    decay: float = 0.7
    theta: float = 0.5
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if self.asymptote != 1.0:
            raise ValueError("asymptote is fixed at 1.0")
        if self.displacement <= 0:
            raise ValueError("displacement must be positive")
        if self.decay <= 0:
            raise ValueError("decay must be positive")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


class TrustOpinion(NamedTuple):
    """One prior parent's view of a node: its last direct trust and when."""

    source_parent: int
    tau: float
    episode: int


class IndirectTrust(NamedTuple):
    """Aggregated indirect trust; ``fresh`` marks the cold-start fallback."""

    value: float
    fresh: bool


@dataclass
class MisbehaviorLedger:
    """Per (parent, child) counts of observed operations and misbehaviors."""

    counts: dict[tuple[int, int], list[int]] = field(default_factory=dict)

    def record(self, parent: int, child: int, ops: int, misbehaviors: int) -> None:
        if ops < 0 or misbehaviors < 0:
            raise ValueError("counts must be non-negative")
        if misbehaviors > ops:
            raise ValueError("misbehaviors cannot exceed operations")
        cell = self.counts.setdefault((parent, child), [0, 0])
        cell[0] += misbehaviors
        cell[1] += ops

    def reset(self, parent: int, child: int) -> None:
        """Start a fresh observation tenure for this parent/child pair."""
        self.counts.pop((parent, child), None)

    def transfer(self, old_parent: int, new_parent: int, child: int) -> None:
        """Carry accumulated evidence when bookkeeping moves between parents."""
        cell = self.counts.pop((old_parent, child), None)
        if cell is not None:
            target = self.counts.setdefault((new_parent, child), [0, 0])
            target[0] += cell[0]
            target[1] += cell[1]

    def misbehavior_pct(self, parent: int, child: int) -> float:
        """Cumulative misbehavior percentage; 0 when nothing was observed."""
        mi, ops = self.counts.get((parent, child), (0, 0))
        if ops == 0:
            return 0.0
        return 100.0 * mi / ops


def record_operations(
    ledger: MisbehaviorLedger, parent: int, child: int, ops: int, misbehaviors: int
) -> MisbehaviorLedger:
    """Accumulate one observation window into the ledger."""
    ledger.record(parent, child, ops, misbehaviors)
    return ledger


def inverse_gompertz(misbehavior_pct: float, params: TrustParams) -> float:
    """Trust as a function of misbehavior percentage, via 1 - A*exp(-B*exp(-C*g)).

    Monotone non-increasing in g on [0, 100]; clamped to [0, 1] against
    floating-point drift. Uses expm1 so the deep tail stays strictly ordered
    instead of flushing to zero.
    """
    if not 0.0 <= misbehavior_pct <= 100.0:
        raise ValueError("misbehavior percentage must lie in [0, 100]")
    inner = -params.displacement * math.exp(-params.decay * misbehavior_pct)
    # 1 - A*e^inner, rearranged around expm1 for precision near tau = 0.
    tau = -(params.asymptote * math.expm1(inner) + (params.asymptote - 1.0))
    return min(1.0, max(0.0, tau))


def trust_coefficient(t: int, total_episodes: int, alpha: float) -> float:
    """Recency weight exp(-alpha*(T - t)) for an opinion saved at episode t.

    Weights under WEIGHT_FLOOR clamp to 0: stale opinions stop counting.
    """
    if t < 0 or t > total_episodes:
        raise ValueError("episode index must lie in [0, total_episodes]")
    omega = math.exp(-alpha * (total_episodes - t))
    return omega if omega >= WEIGHT_FLOOR else 0.0


def indirect_trust(
    opinions: Iterable[TrustOpinion], total_episodes: int, alpha: float
) -> IndirectTrust:
    """Combine prior parents' trust scores with recency weights.

    With no opinions, or with every weight clamped to zero, the node counts
    as new and gets the initial trust of 1.0.
    """
    acc = 0.0
    any_weight = False
    for op in opinions:
        omega = trust_coefficient(op.episode, total_episodes, alpha)
        if omega == 0.0:
            continue
        any_weight = True
        acc += omega * op.tau
    if not any_weight:
        return IndirectTrust(1.0, fresh=True)
    return IndirectTrust(min(1.0, max(0.0, acc)), fresh=False)


def update_direct_trust(
    table: "RoutingTable",
    child: "NodeId",
    ledger: MisbehaviorLedger,
    params: TrustParams,
    episode: int,
) -> float:
    """Refresh the routing entry for ``child`` from accumulated evidence.

    Returns the new trust value. The child must have an entry under the
    table owner.
    """
    entry = table.entries.get(child)
    if entry is None:
        raise KeyError(f"node {child} has no routing entry under {table.owner}")
    g = ledger.misbehavior_pct(table.owner, child)
    entry.trust = inverse_gompertz(g, params)
    entry.misbehavior_pct = g
    entry.episode = episode
    return entry.trust
