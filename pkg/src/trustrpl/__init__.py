"""Trust-aware RPL DODAG simulator with root-level reinforcement learning.

Parents score child behavior through an Inverse Gompertz trust curve and
reward or penalize them each episode; the root aggregates rewards into a
return and learns, epoch by epoch, whether to retain or modify the network.
"""

from .behavior import (
    BehaviorProfile,
    EnvironmentProfile,
    EnvName,
    SeededRandom,
    generate_misbehaviors,
    spawn_population,
)
from .dodag import (
    ControlMessage,
    CycleError,
    Dodag,
    JoinScenario,
    MessageKind,
    NodeClass,
    NodeId,
    NodeRecord,
    NoCandidateError,
    NoRouteError,
    RoutingEntry,
    RoutingTable,
    change_parent,
    compute_rank,
    create_root,
    join_node,
    route_lookup,
    select_parent,
)
from .marl import (
    Action,
    DENY,
    DodagState,
    EpochRecord,
    JoinEvent,
    MarlParams,
    OPTIMAL_PAIRS,
    QTable,
    StateActionPair,
    aggregate_return,
    decide_epoch,
    episode_reward,
    epsilon_greedy_select,
    expected_reward,
    modify_dodag,
    update_q,
)
from .sim import RunResult, ScenarioConfig, run_episode, run_epoch, run_scenario
from .trust import (
    IndirectTrust,
    MisbehaviorLedger,
    TrustOpinion,
    TrustParams,
    indirect_trust,
    inverse_gompertz,
    record_operations,
    trust_coefficient,
    update_direct_trust,
)

__version__ = "0.1.0"
