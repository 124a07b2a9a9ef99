"""DODAG topology: node records, routing tables, control messages, and the
join / parent-change / suspend state machine.

The tree is owned single-threaded; every mutating operation leaves the
parent links of active nodes forming a tree rooted at the root node, with
child ranks strictly above their parent's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

from .trust import MisbehaviorLedger, TrustOpinion, TrustParams, indirect_trust

NodeId = int

ROOT_RANK = 1
ROOT_FAILURE_RATE = 0.05
ETX_RANGE = (1.0, 3.0)
DEFAULT_RANK_FACTOR = 1.0


class NodeClass(Enum):
    HONEST = "honest"
    SELFISH = "selfish"
    MALICIOUS = "malicious"


class MessageKind(Enum):
    DIS = "dis"
    DIO = "dio"
    DAO = "dao"
    DAO_ACK = "dao_ack"
    CC = "cc"


class JoinScenario(Enum):
    """Who initiates a join: the network inviting, or the node soliciting."""

    DODAG_INVITES = "dodag_invites"
    NODE_SOLICITS = "node_solicits"


class CycleError(ValueError):
    """Re-parenting would create a loop."""


class NoCandidateError(ValueError):
    """No parent candidate advertised itself."""


class NoRouteError(LookupError):
    """Routing table has no entry for the destination."""


@dataclass(frozen=True)
class DioPayload:
    rank: int
    trust: float
    version: int


@dataclass(frozen=True)
class DaoPayload:
    parent: NodeId


@dataclass(frozen=True)
class CcPayload:
    rpl_instance_id: int
    request: bool
    cc_nonce: int
    dodag_id: NodeId
    destination_counter: int


@dataclass(frozen=True)
class ControlMessage:
    kind: MessageKind
    sender: NodeId
    receiver: Optional[NodeId] = None  # None = broadcast
    payload: object = None

    def __post_init__(self) -> None:
        if self.kind in (MessageKind.DAO, MessageKind.DAO_ACK) and self.receiver is None:
            raise ValueError(f"{self.kind.value} messages are unicast")


@dataclass
class NodeRecord:
    """State of one DODAG node as tracked by the simulation."""

    id: NodeId
    parent: Optional[NodeId] = None
    rank: int = 0  # 0 until the node holds a place in the tree
    etx: float = 1.0
    failure_rate: float = 0.0
    node_class: NodeClass = NodeClass.HONEST
    trust: float = 1.0  # as held by the current parent
    joined_episode: int = -1
    active: bool = False
    moved_episode: int = -1  # last episode this node changed parent

    def __post_init__(self) -> None:
        if not 0.0 <= self.failure_rate <= 1.0:
            raise ValueError("failure_rate must lie in [0, 1]")
        if self.etx < 1.0:
            raise ValueError("etx must be >= 1")


@dataclass
class RoutingEntry:
    destination: NodeId
    next_hop: NodeId
    trust: float = 1.0
    reward: int = 0
    episode: int = 0
    misbehavior_pct: float = 0.0


@dataclass
class RoutingTable:
    """Per-node bookkeeping: live entries for the subtree, history for
    former children (kept for indirect-trust queries)."""

    owner: NodeId
    entries: dict[NodeId, RoutingEntry] = field(default_factory=dict)
    history: dict[NodeId, RoutingEntry] = field(default_factory=dict)

    def archive(self, destination: NodeId) -> None:
        entry = self.entries.pop(destination, None)
        if entry is not None:
            self.history[destination] = replace(entry)


@dataclass
class JoinOutcome:
    accepted: bool
    parent: Optional[NodeId] = None
    trust: float = 1.0
    reason: str = ""


@dataclass
class ChangeOutcome:
    accepted: bool
    reason: str = ""


@dataclass
class Dodag:
    """A single DODAG instance plus run context shared by its operations."""

    root: NodeId
    version: int = 1
    nodes: dict[NodeId, NodeRecord] = field(default_factory=dict)
    tables: dict[NodeId, RoutingTable] = field(default_factory=dict)
    epoch_index: int = 0
    episode_index: int = 0
    episodes_per_epoch: int = 10
    rank_factor: float = DEFAULT_RANK_FACTOR
    ledger: MisbehaviorLedger = field(default_factory=MisbehaviorLedger)
    # every parent (current or former) a node has ever had, for CC queries
    parent_index: dict[NodeId, set[NodeId]] = field(default_factory=dict)
    _next_id: int = 2
    _routes_stale: bool = False

    # --- bookkeeping helpers -------------------------------------------------

    def allocate_id(self) -> NodeId:
        nid = self._next_id
        self._next_id += 1
        return nid

    def node(self, node_id: NodeId) -> NodeRecord:
        return self.nodes[node_id]

    def table(self, node_id: NodeId) -> RoutingTable:
        return self.tables[node_id]

    def active_ids(self) -> list[NodeId]:
        return [n.id for n in self.nodes.values() if n.active]

    def active_nonroot(self) -> list[NodeRecord]:
        return [n for n in self.nodes.values() if n.active and n.id != self.root]

    def children_of(self, node_id: NodeId) -> list[NodeId]:
        return [
            n.id for n in self.nodes.values() if n.active and n.parent == node_id
        ]

    def is_descendant(self, candidate: NodeId, ancestor: NodeId) -> bool:
        """True if ``candidate`` sits in the subtree under ``ancestor``."""
        cursor = self.nodes.get(candidate)
        while cursor is not None and cursor.parent is not None:
            if cursor.parent == ancestor:
                return True
            cursor = self.nodes.get(cursor.parent)
        return False

    def subtree_ids(self, top: NodeId) -> list[NodeId]:
        out = [top]
        stack = [top]
        while stack:
            nid = stack.pop()
            for child in self.children_of(nid):
                out.append(child)
                stack.append(child)
        return out

    def path_from_root(self, node_id: NodeId) -> list[NodeId]:
        chain = [node_id]
        cursor = self.nodes[node_id]
        while cursor.parent is not None:
            chain.append(cursor.parent)
            cursor = self.nodes[cursor.parent]
        chain.reverse()
        return chain

    # --- trust plumbing ------------------------------------------------------

    def gather_opinions(self, node_id: NodeId) -> list[TrustOpinion]:
        """Collect prior parents' saved trust for ``node_id``.

        Only opinions from active nodes count (suspended nodes are off the
        network and cannot answer a CC query), and only those stamped within
        the current epoch's episode window.
        """
        window_start = self.epoch_index * self.episodes_per_epoch
        opinions: list[TrustOpinion] = []
        for pid in sorted(self.parent_index.get(node_id, ())):
            holder = self.nodes.get(pid)
            if holder is None or not holder.active:
                continue
            table = self.tables[pid]
            entry = table.entries.get(node_id)
            if entry is None or self.nodes[node_id].parent != pid:
                entry = table.history.get(node_id)
            if entry is None or entry.episode <= window_start:
                continue
            t_within = entry.episode - window_start
            opinions.append(TrustOpinion(pid, entry.trust, t_within))
        return opinions

    # --- routing -------------------------------------------------------------

    def refresh_routes(self) -> None:
        """Rebuild descendant routing entries across the tree.

        Direct-child entries are authoritative (they carry trust/reward
        bookkeeping) and are left in place; entries for deeper destinations
        are derived and rebuilt wholesale.
        """
        child_map: dict[NodeId, list[NodeId]] = {}
        for n in self.nodes.values():
            if n.active and n.parent is not None:
                child_map.setdefault(n.parent, []).append(n.id)
        for nid, table in self.tables.items():
            keep = set(child_map.get(nid, ()))
            for dest in [d for d in table.entries if d not in keep]:
                del table.entries[dest]
        # DFS from root, stamping each node into every ancestor's table.
        stack: list[tuple[NodeId, list[NodeId]]] = [(self.root, [])]
        while stack:
            nid, ancestors = stack.pop()
            if ancestors:
                direct_parent = ancestors[-1]
                auth = self.tables[direct_parent].entries[nid]
                for depth, anc in enumerate(ancestors[:-1]):
                    hop = ancestors[depth + 1]
                    self.tables[anc].entries[nid] = RoutingEntry(
                        destination=nid,
                        next_hop=hop,
                        trust=auth.trust,
                        reward=auth.reward,
                        episode=auth.episode,
                        misbehavior_pct=auth.misbehavior_pct,
                    )
            chain = ancestors + [nid]
            for child in child_map.get(nid, ()):
                stack.append((child, chain))
        self._routes_stale = False


def create_root(params) -> Dodag:
    """Build a fresh DODAG holding only its root node.

    ``params`` is the scenario configuration; only the fields that shape the
    tree (episodes per epoch, rank factor, trust constants) are read here.
    """
    root_id: NodeId = 1
    root = NodeRecord(
        id=root_id,
        parent=None,
        rank=ROOT_RANK,
        etx=1.0,
        failure_rate=ROOT_FAILURE_RATE,
        node_class=NodeClass.HONEST,
        trust=1.0,
        joined_episode=0,
        active=True,
    )
    dodag = Dodag(
        root=root_id,
        version=1,
        episodes_per_epoch=getattr(params, "episodes_per_epoch", 10),
        rank_factor=getattr(params, "rank_factor", DEFAULT_RANK_FACTOR),
    )
    dodag.nodes[root_id] = root
    dodag.tables[root_id] = RoutingTable(owner=root_id)
    dodag._next_id = root_id + 1
    return dodag


def compute_rank(
    parent_rank: int, hop_count: int, etx: float, rank_factor: float = DEFAULT_RANK_FACTOR
) -> int:
    """Child rank: parent rank plus ceil(rank_factor * hops * etx)."""
    if parent_rank < 1:
        raise ValueError("parent_rank must be >= 1")
    if hop_count < 1:
        raise ValueError("hop_count must be >= 1")
    if etx < 1:
        raise ValueError("etx must be >= 1")
    if rank_factor <= 0:
        raise ValueError("rank_factor must be positive")
    increment = math.ceil(rank_factor * hop_count * etx)
    return parent_rank + increment


def select_parent(dio_messages: Iterable[ControlMessage]) -> NodeId:
    """Pick the advertiser with the best (lowest) rank; ties go to the
    lowest node id."""
    best: Optional[tuple[int, NodeId]] = None
    for msg in dio_messages:
        if msg.kind is not MessageKind.DIO:
            raise ValueError("parent selection reads DIO messages only")
        key = (msg.payload.rank, msg.sender)
        if best is None or key < best:
            best = key
    if best is None:
        raise NoCandidateError("no DIO received")
    return best[1]


def _attach(
    dodag: Dodag,
    node: NodeRecord,
    parent_id: NodeId,
    trust_value: float,
    *,
    fresh_ledger: bool = True,
) -> None:
    """Wire a node under a parent: rank, entry, ledger tenure, indexes."""
    parent = dodag.nodes[parent_id]
    node.parent = parent_id
    node.rank = compute_rank(parent.rank, 1, node.etx, dodag.rank_factor)
    node.trust = trust_value
    node.active = True
    dodag.nodes[node.id] = node
    dodag.tables.setdefault(node.id, RoutingTable(owner=node.id))
    dodag.tables[parent_id].entries[node.id] = RoutingEntry(
        destination=node.id,
        next_hop=node.id,
        trust=trust_value,
        reward=0,
        episode=dodag.episode_index,
    )
    if fresh_ledger:
        dodag.ledger.reset(parent_id, node.id)
    dodag.parent_index.setdefault(node.id, set()).add(parent_id)
    dodag._routes_stale = True


def join_node(
    dodag: Dodag,
    joiner: NodeRecord,
    scenario: JoinScenario,
    params: TrustParams,
    candidates: Optional[Iterable[NodeId]] = None,
) -> JoinOutcome:
    """Run the join handshake and the trust admission policy.

    DODAG_INVITES goes DIO -> DAO -> DAO-ACK; NODE_SOLICITS prepends a DIS
    broadcast. ``candidates`` limits which nodes the joiner hears from
    (radio reach has no geometry here); by default every active node
    advertises.
    """
    existing = dodag.nodes.get(joiner.id)
    if existing is not None and existing.active:
        raise ValueError(f"node {joiner.id} is already an active member")

    candidate_ids = sorted(candidates) if candidates is not None else dodag.active_ids()
    if scenario is JoinScenario.NODE_SOLICITS:
        ControlMessage(MessageKind.DIS, sender=joiner.id)  # broadcast solicitation
    dios = [
        ControlMessage(
            MessageKind.DIO,
            sender=pid,
            payload=DioPayload(dodag.nodes[pid].rank, dodag.nodes[pid].trust, dodag.version),
        )
        for pid in candidate_ids
        if pid in dodag.nodes and dodag.nodes[pid].active
    ]
    if not dios:
        return JoinOutcome(False, reason="no reachable parent candidates")
    parent_id = select_parent(dios)

    verdict = indirect_trust(
        dodag.gather_opinions(joiner.id), dodag.episodes_per_epoch, params.alpha
    )
    if verdict.value < params.theta:
        return JoinOutcome(False, parent=parent_id, trust=verdict.value, reason="trust below threshold")

    ControlMessage(MessageKind.DAO, sender=joiner.id, receiver=parent_id,
                   payload=DaoPayload(parent_id))
    node = dodag.nodes.get(joiner.id, joiner)
    node.joined_episode = dodag.episode_index
    _attach(dodag, node, parent_id, verdict.value)
    ControlMessage(MessageKind.DAO_ACK, sender=parent_id, receiver=joiner.id)
    return JoinOutcome(True, parent=parent_id, trust=verdict.value)


def change_parent(
    dodag: Dodag, child: NodeId, new_parent: NodeId, params: TrustParams
) -> ChangeOutcome:
    """Move ``child`` under ``new_parent`` if rank improves and trust allows.

    The old parent archives its entry for the child; the new parent opens a
    fresh one with no reward. Ranks of the moved subtree are recomputed.
    """
    node = dodag.nodes[child]
    if not node.active or node.parent is None:
        raise ValueError(f"node {child} is not an attached member")
    target = dodag.nodes.get(new_parent)
    if target is None or not target.active:
        raise ValueError(f"node {new_parent} is not an active member")
    if new_parent == child or dodag.is_descendant(new_parent, child):
        raise CycleError(f"{new_parent} lies in the subtree of {child}")
    current_parent = dodag.nodes[node.parent]
    if target.rank >= current_parent.rank:
        return ChangeOutcome(False, reason="no rank improvement")

    verdict = indirect_trust(
        dodag.gather_opinions(child), dodag.episodes_per_epoch, params.alpha
    )
    if verdict.value < params.theta:
        return ChangeOutcome(False, reason="trust below threshold")

    old_parent = node.parent
    dodag.tables[old_parent].archive(child)
    dodag.ledger.reset(old_parent, child)
    node.moved_episode = dodag.episode_index
    _attach(dodag, node, new_parent, verdict.value)
    _recompute_subtree_ranks(dodag, child)
    return ChangeOutcome(True)


def suspend_node(dodag: Dodag, node_id: NodeId) -> None:
    """Remove a node from the tree, re-homing its children to its parent.

    Children are re-parented before the node is dropped; their bookkeeping
    entries and observation ledgers move to the new parent so accumulated
    evidence survives the re-home.
    """
    if node_id == dodag.root:
        raise ValueError("the root cannot be removed from its own DODAG")
    node = dodag.nodes[node_id]
    if not node.active:
        return
    parent_id = node.parent
    parent_table = dodag.tables[parent_id]
    own_table = dodag.tables[node_id]
    for child_id in dodag.children_of(node_id):
        entry = own_table.entries.pop(child_id)
        entry.next_hop = child_id
        parent_table.entries[child_id] = entry
        dodag.ledger.transfer(node_id, parent_id, child_id)
        child = dodag.nodes[child_id]
        child.parent = parent_id
        dodag.parent_index.setdefault(child_id, set()).add(parent_id)
        _recompute_subtree_ranks(dodag, child_id)
    parent_table.archive(node_id)
    node.active = False
    dodag._routes_stale = True


def _recompute_subtree_ranks(dodag: Dodag, top: NodeId) -> None:
    node = dodag.nodes[top]
    parent = dodag.nodes[node.parent]
    node.rank = compute_rank(parent.rank, 1, node.etx, dodag.rank_factor)
    stack = [top]
    while stack:
        nid = stack.pop()
        base = dodag.nodes[nid].rank
        for child_id in dodag.children_of(nid):
            child = dodag.nodes[child_id]
            child.rank = compute_rank(base, 1, child.etx, dodag.rank_factor)
            stack.append(child_id)


def route_lookup(table: RoutingTable, destination: NodeId) -> NodeId:
    """Next hop toward ``destination`` from the table owner."""
    entry = table.entries.get(destination)
    if entry is None:
        raise NoRouteError(f"{table.owner} has no route to {destination}")
    return entry.next_hop


def check_tree(dodag: Dodag) -> None:
    """Assert the structural invariants; raises AssertionError on violation."""
    active = dodag.active_nonroot()
    seen = set()
    for n in active:
        assert n.parent is not None, f"active node {n.id} has no parent"
        assert n.rank > dodag.nodes[n.parent].rank, (
            f"rank inversion at {n.id}: {n.rank} <= {dodag.nodes[n.parent].rank}"
        )
        chain = dodag.path_from_root(n.id)
        assert chain[0] == dodag.root, f"node {n.id} is detached from the root"
        seen.add(n.id)
        entry = dodag.tables[n.parent].entries.get(n.id)
        assert entry is not None, f"parent of {n.id} has no entry for it"
    assert len(seen) == len(active)
