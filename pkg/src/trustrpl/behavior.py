"""Node populations and misbehavior event generation.

Non-root nodes come in three classes with disjoint failure-rate bands;
environments fix how many of each class join the network. All randomness
flows through one seeded generator per run.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .dodag import ETX_RANGE, NodeClass, NodeRecord

# Failure-rate band per node class: lifetime likelihood of misbehaving
# on any single network operation.
CLASS_BANDS: dict[NodeClass, tuple[float, float]] = {
    NodeClass.HONEST: (0.00, 0.10),
    NodeClass.SELFISH: (0.40, 0.50),
    NodeClass.MALICIOUS: (0.80, 0.90),
}


class EnvName(Enum):
    LOW_MALICIOUS = "low_malicious"
    MEDIUM_MALICIOUS = "medium_malicious"
    HIGH_MALICIOUS = "high_malicious"


# Allowed malicious share per environment, and the default used when the
# profile is built by name.
ENV_BANDS: dict[EnvName, tuple[float, float]] = {
    EnvName.LOW_MALICIOUS: (0.10, 0.10),
    EnvName.MEDIUM_MALICIOUS: (0.40, 0.45),
    EnvName.HIGH_MALICIOUS: (0.85, 0.90),
}
ENV_DEFAULT_FRACTION: dict[EnvName, float] = {
    EnvName.LOW_MALICIOUS: 0.10,
    EnvName.MEDIUM_MALICIOUS: 0.425,
    EnvName.HIGH_MALICIOUS: 0.875,
}


class SeededRandom:
    """Thin wrapper over numpy's PCG64 generator.

    Identical seed plus identical call sequence reproduces identical
    outputs; the algorithm name travels with run metadata so results stay
    reproducible across platforms.
    """

    algorithm = "PCG64"

    def __init__(self, seed: int):
        if not 0 <= seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def random(self) -> float:
        return float(self._gen.random())

    def uniform(self, low: float, high: float) -> float:
        return float(self._gen.uniform(low, high))

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))

    def binomial(self, n: int, p: float) -> int:
        return int(self._gen.binomial(n, p))

    def binomial_array(self, n: int, p: Sequence[float]) -> np.ndarray:
        return self._gen.binomial(n, np.asarray(p, dtype=float))

    def choice(self, seq: Sequence):
        return seq[int(self._gen.integers(0, len(seq)))]


@dataclass(frozen=True)
class BehaviorProfile:
    node_class: NodeClass
    failure_rate: float

    def __post_init__(self) -> None:
        lo, hi = CLASS_BANDS[self.node_class]
        if not lo <= self.failure_rate <= hi:
            raise ValueError(
                f"{self.node_class.value} failure rate {self.failure_rate} "
                f"outside [{lo}, {hi}]"
            )


@dataclass(frozen=True)
class EnvironmentProfile:
    """Population mix: malicious share, with the remainder split between
    honest and selfish nodes."""

    name: EnvName
    malicious_fraction: float
    honest_share: float = 0.5  # of the non-malicious remainder
    selfish_share: float = 0.5

    def __post_init__(self) -> None:
        lo, hi = ENV_BANDS[self.name]
        if not lo <= self.malicious_fraction <= hi:
            raise ValueError(
                f"{self.name.value} malicious fraction {self.malicious_fraction} "
                f"outside [{lo}, {hi}]"
            )
        if abs(self.honest_share + self.selfish_share - 1.0) > 1e-9:
            raise ValueError("honest and selfish shares must sum to 1")

    @classmethod
    def by_name(cls, name: EnvName | str) -> "EnvironmentProfile":
        name = EnvName(name) if isinstance(name, str) else name
        return cls(name=name, malicious_fraction=ENV_DEFAULT_FRACTION[name])

    def class_probabilities(self) -> dict[NodeClass, float]:
        rest = 1.0 - self.malicious_fraction
        return {
            NodeClass.MALICIOUS: self.malicious_fraction,
            NodeClass.HONEST: rest * self.honest_share,
            NodeClass.SELFISH: rest * self.selfish_share,
        }


def draw_profile(node_class: NodeClass, rng: SeededRandom) -> BehaviorProfile:
    lo, hi = CLASS_BANDS[node_class]
    return BehaviorProfile(node_class, rng.uniform(lo, hi))


def draw_class(env: EnvironmentProfile, rng: SeededRandom) -> NodeClass:
    """Sample one arrival's class from the environment mix."""
    probs = env.class_probabilities()
    u = rng.random()
    if u < probs[NodeClass.MALICIOUS]:
        return NodeClass.MALICIOUS
    if u < probs[NodeClass.MALICIOUS] + probs[NodeClass.HONEST]:
        return NodeClass.HONEST
    return NodeClass.SELFISH


def make_node(node_id: int, node_class: NodeClass, rng: SeededRandom) -> NodeRecord:
    """Create an unattached node with class-banded failure rate and drawn ETX."""
    profile = draw_profile(node_class, rng)
    return NodeRecord(
        id=node_id,
        node_class=node_class,
        failure_rate=profile.failure_rate,
        etx=rng.uniform(*ETX_RANGE),
    )


def spawn_population(
    n: int, env: EnvironmentProfile, rng: SeededRandom, start_id: int = 2
) -> list[NodeRecord]:
    """Build ``n`` unattached nodes matching the environment mix.

    The malicious count floors toward the fraction; the remainder splits
    between honest and selfish, honest taking any odd leftover.
    """
    if n < 1:
        raise ValueError("population size must be at least 1")
    n_malicious = int(np.floor(env.malicious_fraction * n))
    rest = n - n_malicious
    n_selfish = int(np.floor(rest * env.selfish_share))
    n_honest = rest - n_selfish
    classes = (
        [NodeClass.MALICIOUS] * n_malicious
        + [NodeClass.HONEST] * n_honest
        + [NodeClass.SELFISH] * n_selfish
    )
    return [
        make_node(start_id + i, cls, rng) for i, cls in enumerate(classes)
    ]


def generate_misbehaviors(node: NodeRecord, ops: int, rng: SeededRandom) -> int:
    """Number of misbehaving instances in ``ops`` operations.

    Every kind of misbehavior (drops, delays, refusals, spurious traffic)
    counts the same, so a binomial draw at the node's failure rate covers
    them all.
    """
    if ops < 0:
        raise ValueError("operation count must be non-negative")
    if ops == 0:
        return 0
    return rng.binomial(ops, node.failure_rate)
