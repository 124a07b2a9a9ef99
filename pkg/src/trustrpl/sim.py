"""Scenario driver: the epoch/episode loop.

Each episode runs a fixed sequence (joins, parent changes, traffic,
trust updates, rewards) so a seed fully determines the run. Each epoch
closes with the root's retain-or-modify decision.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from typing import Optional

from . import dodag as topo
from . import marl
from .behavior import (
    EnvironmentProfile,
    SeededRandom,
    draw_class,
    make_node,
    spawn_population,
)
from .dodag import Dodag, JoinScenario, NodeClass, route_lookup
from .marl import Action, DodagState, EpochRecord, MarlParams, QTable, StateActionPair
from .trust import TrustParams, update_direct_trust


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 1
    n_initial_nodes: int = 20
    environment: str = "medium_malicious"
    trust: TrustParams = field(default_factory=TrustParams)
    marl: MarlParams = field(default_factory=MarlParams)
    episodes_per_epoch: int = 10
    n_epochs: int = 140
    ops_per_episode: int = 20
    join_attempts_per_episode: int = 1
    parent_change_probability: float = 0.05
    # Fraction of current members a joiner hears DIO traffic from; below 1.0
    # the tree grows depth instead of collapsing into a star on the root.
    dio_reach: float = 0.5
    # Per-node per-episode chance of leaving voluntarily; keeps membership
    # from growing without bound as joiners accumulate.
    departure_probability: float = 0.004

    def __post_init__(self) -> None:
        if self.n_initial_nodes < 1:
            raise ValueError("n_initial_nodes must be at least 1")
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be at least 1")
        if self.episodes_per_epoch < 1:
            raise ValueError("episodes_per_epoch must be at least 1")
        if self.ops_per_episode < 0:
            raise ValueError("ops_per_episode must be non-negative")
        if self.join_attempts_per_episode < 0:
            raise ValueError("join_attempts_per_episode must be non-negative")
        if not 0.0 <= self.parent_change_probability <= 1.0:
            raise ValueError("parent_change_probability must lie in [0, 1]")
        if not 0.0 < self.dio_reach <= 1.0:
            raise ValueError("dio_reach must lie in (0, 1]")
        if not 0.0 <= self.departure_probability <= 1.0:
            raise ValueError("departure_probability must lie in [0, 1]")
        EnvironmentProfile.by_name(self.environment)  # validates the name

    def environment_profile(self) -> EnvironmentProfile:
        return EnvironmentProfile.by_name(self.environment)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of everything but the seed; seed travels separately."""
        payload = self.to_dict()
        payload.pop("seed")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        """Build a config from parsed JSON; unknown keys are rejected."""
        raw = dict(raw)
        trust_raw = raw.pop("trust", {})
        marl_raw = raw.pop("marl", {})
        known = set(cls.__dataclass_fields__) - {"trust", "marl"}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        trust_known = set(TrustParams.__dataclass_fields__)
        unknown = set(trust_raw) - trust_known
        if unknown:
            raise ValueError(f"unknown trust keys: {sorted(unknown)}")
        marl_known = set(MarlParams.__dataclass_fields__) - {"episodes_per_epoch"}
        unknown = set(marl_raw) - marl_known
        if unknown:
            raise ValueError(f"unknown marl keys: {sorted(unknown)}")
        episodes = raw.get("episodes_per_epoch", 10)
        trust = TrustParams(**trust_raw)
        params = MarlParams(episodes_per_epoch=episodes, **marl_raw)
        return cls(trust=trust, marl=params, **raw)


@dataclass
class EpisodeSummary:
    episode: int
    joins_accepted: int = 0
    joins_denied: int = 0
    parent_changes: int = 0
    departures: int = 0
    operations: int = 0
    misbehaviors: int = 0


@dataclass
class RunResult:
    """Everything a run produces, sufficient to rebuild every output table."""

    config: ScenarioConfig
    metadata: dict = field(default_factory=dict)
    trust_series: list[tuple[int, int, str, float]] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    mean_failure_rates: list[float] = field(default_factory=list)
    decision_tallies: dict[StateActionPair, int] = field(default_factory=dict)
    chosen_tallies: dict[StateActionPair, int] = field(default_factory=dict)
    episode_summaries: list[EpisodeSummary] = field(default_factory=list)

    def retain_count(self) -> int:
        return sum(1 for rec in self.epochs if rec.chosen.action is Action.RETAIN)

    def modify_count(self) -> int:
        return sum(1 for rec in self.epochs if rec.chosen.action is Action.MODIFY)

    def optimal_decision_fraction(self) -> float:
        """Share of epochs whose (observed state, executed action) pair is
        one of the two desirable ones."""
        if not self.epochs:
            return 0.0
        hits = sum(
            1
            for rec in self.epochs
            if StateActionPair(rec.state, rec.chosen.action) in marl.OPTIMAL_PAIRS
        )
        return hits / len(self.epochs)

    def mean_return(self) -> float:
        if not self.epochs:
            return 0.0
        return sum(rec.return_value for rec in self.epochs) / len(self.epochs)


def _sample_candidates(dodag: Dodag, rng: SeededRandom, reach: float) -> list[int]:
    """Subset of members whose DIO broadcast the joiner hears."""
    active = dodag.active_ids()
    if reach >= 1.0:
        return active
    heard = [nid for nid in active if rng.random() < reach]
    return heard if heard else [active[rng.integers(0, len(active))]]


def _run_departures(dodag: Dodag, config: ScenarioConfig, rng: SeededRandom,
                    summary: EpisodeSummary) -> None:
    if config.departure_probability == 0.0:
        return
    leavers = [
        n.id for n in dodag.active_nonroot()
        if rng.random() < config.departure_probability
    ]
    for nid in leavers:
        topo.suspend_node(dodag, nid)
        summary.departures += 1


def _run_joins(dodag: Dodag, config: ScenarioConfig, rng: SeededRandom,
               summary: EpisodeSummary) -> None:
    env = config.environment_profile()
    for _ in range(config.join_attempts_per_episode):
        node = make_node(dodag.allocate_id(), draw_class(env, rng), rng)
        scenario = (
            JoinScenario.DODAG_INVITES if rng.random() < 0.5 else JoinScenario.NODE_SOLICITS
        )
        candidates = _sample_candidates(dodag, rng, config.dio_reach)
        outcome = topo.join_node(dodag, node, scenario, config.trust, candidates)
        if outcome.accepted:
            summary.joins_accepted += 1
        else:
            summary.joins_denied += 1


def _run_parent_changes(dodag: Dodag, config: ScenarioConfig, rng: SeededRandom,
                        summary: EpisodeSummary) -> None:
    movers = [
        n for n in dodag.active_nonroot() if rng.random() < config.parent_change_probability
    ]
    for node in movers:
        parent_rank = dodag.nodes[node.parent].rank
        eligible = [
            m.id
            for m in dodag.nodes.values()
            if m.active
            and m.rank < parent_rank
            and m.id != node.parent
            and m.id != node.id
            and not dodag.is_descendant(m.id, node.id)
        ]
        if not eligible:
            continue
        new_parent = eligible[rng.integers(0, len(eligible))]
        outcome = topo.change_parent(dodag, node.id, new_parent, config.trust)
        if outcome.accepted:
            summary.parent_changes += 1


def _run_traffic(dodag: Dodag, config: ScenarioConfig, rng: SeededRandom,
                 summary: EpisodeSummary) -> None:
    """Message exchange with misbehavior generation.

    Every active non-root node performs ops_per_episode operations under
    its parent's watch; one routed message per episode keeps the routing
    tables and CC bookkeeping exercised.
    """
    members = dodag.active_nonroot()
    if not members or config.ops_per_episode == 0:
        return
    rates = [n.failure_rate for n in members]
    draws = rng.binomial_array(config.ops_per_episode, rates)
    ledger = dodag.ledger
    for node, bad in zip(members, draws):
        ledger.record(node.parent, node.id, config.ops_per_episode, int(bad))
        summary.operations += config.ops_per_episode
        summary.misbehaviors += int(bad)
    # One downward delivery from the root, preceded by a CC exchange.
    dest = members[rng.integers(0, len(members))].id
    if dodag._routes_stale:
        dodag.refresh_routes()
    topo.ControlMessage(
        topo.MessageKind.CC,
        sender=dodag.root,
        receiver=dest,
        payload=topo.CcPayload(
            rpl_instance_id=0,
            request=True,
            cc_nonce=rng.integers(0, 2**16),
            dodag_id=dodag.root,
            destination_counter=dodag.episode_index,
        ),
    )
    hop = dodag.root
    while hop != dest:
        hop = route_lookup(dodag.tables[hop], dest)


def _run_trust_updates(dodag: Dodag, config: ScenarioConfig,
                       result: RunResult) -> None:
    episode = dodag.episode_index
    for node in dodag.active_nonroot():
        table = dodag.tables[node.parent]
        node.trust = update_direct_trust(
            table, node.id, dodag.ledger, config.trust, episode
        )
        result.trust_series.append(
            (episode, node.id, node.node_class.value, node.trust)
        )


def _run_rewards(dodag: Dodag, config: ScenarioConfig) -> None:
    episode = dodag.episode_index
    theta = config.trust.theta
    for node in dodag.active_nonroot():
        if node.joined_episode == episode or node.moved_episode == episode:
            continue  # entered or moved this episode: keeps its 0
        entry = dodag.tables[node.parent].entries[node.id]
        entry.reward = marl.episode_reward(entry.trust, theta, marl.JoinEvent.EXISTING)


def run_episode(dodag: Dodag, config: ScenarioConfig, rng: SeededRandom,
                result: RunResult) -> EpisodeSummary:
    """Advance one episode through the fixed event sequence."""
    dodag.episode_index += 1
    summary = EpisodeSummary(episode=dodag.episode_index)
    _run_departures(dodag, config, rng, summary)
    _run_joins(dodag, config, rng, summary)
    _run_parent_changes(dodag, config, rng, summary)
    _run_traffic(dodag, config, rng, summary)
    _run_trust_updates(dodag, config, result)
    _run_rewards(dodag, config)
    result.episode_summaries.append(summary)
    return summary


def run_epoch(dodag: Dodag, qtable: QTable, config: ScenarioConfig,
              rng: SeededRandom, result: RunResult) -> EpochRecord:
    """Run a full epoch of episodes, then the root's decision."""
    for _ in range(config.episodes_per_epoch):
        run_episode(dodag, config, rng, result)
    members = dodag.active_nonroot()
    mean_rate = (
        sum(n.failure_rate for n in members) / len(members) if members else 0.0
    )
    record = marl.decide_epoch(dodag, qtable, config.marl, rng)
    result.epochs.append(record)
    result.mean_failure_rates.append(mean_rate)
    decision = StateActionPair(record.state, record.chosen.action)
    result.decision_tallies[decision] = result.decision_tallies.get(decision, 0) + 1
    result.chosen_tallies[record.chosen] = result.chosen_tallies.get(record.chosen, 0) + 1
    dodag.epoch_index += 1
    return record


def run_scenario(config: ScenarioConfig) -> RunResult:
    """Execute a full deterministic run for one config and seed."""
    rng = SeededRandom(config.seed)
    dodag = topo.create_root(config)
    result = RunResult(
        config=config,
        metadata={
            "seed": config.seed,
            "config_digest": config.digest(),
            "generator": SeededRandom.algorithm,
            "environment": config.environment,
        },
    )
    # Initial membership joins at episode 0; rewards start with episode 1.
    population = spawn_population(config.n_initial_nodes, config.environment_profile(),
                                  rng, start_id=dodag._next_id)
    dodag._next_id += len(population)
    for node in population:
        candidates = _sample_candidates(dodag, rng, config.dio_reach)
        topo.join_node(dodag, node, JoinScenario.DODAG_INVITES, config.trust, candidates)
    qtable = QTable()
    for _ in range(config.n_epochs):
        run_epoch(dodag, qtable, config, rng, result)
    result.metadata["final_members"] = len(dodag.active_nonroot())
    return result
