"""Agent selection within a physical domain.

The default policy picks the member with the highest processing power and
keeps the incumbent on ties; the two classic alternatives (lowest id,
highest connectivity) sit behind the same interface. A fresh election with
no incumbent breaks power ties by lowest node id so that every member
computes the same agent without extra rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .core import Ait, DssmError, NodeId


class EmptyDomain(DssmError):
    """Election over an AIT with no entries."""


class ElectionPolicy(Enum):
    MAX_POWER = "max_power"
    LOWEST_ID = "lowest_id"
    HIGHEST_CONNECTIVITY = "highest_connectivity"


@dataclass
class AdjacencyView:
    """Per-node neighbour counts observed within the failure window."""

    neighbor_counts: dict[NodeId, int] = field(default_factory=dict)


def select_agent(
    ait: Ait,
    current_agent: NodeId,
    policy: ElectionPolicy = ElectionPolicy.MAX_POWER,
    adj: AdjacencyView | None = None,
) -> NodeId:
    """Pick the domain agent from the given AIT.

    MAX_POWER: member with the greatest processing power; the incumbent is
    kept when it ties for the maximum, otherwise the lowest id among the
    tied maxima wins. LOWEST_ID: minimum node id. HIGHEST_CONNECTIVITY:
    maximum neighbour count, lowest id among ties. The result is always a
    key of `ait`.
    """
    if len(ait) == 0:
        raise EmptyDomain("cannot select an agent from an empty AIT")

    if policy is ElectionPolicy.LOWEST_ID:
        return min(ait.ids())

    if policy is ElectionPolicy.HIGHEST_CONNECTIVITY:
        counts = adj.neighbor_counts if adj else {}
        return min(ait.ids(), key=lambda n: (-counts.get(n, 0), n))

    entries = ait.entries()
    top = max(e.processing_power_mhz for e in entries)
    argmax = [e.node_id for e in entries if e.processing_power_mhz == top]
    if current_agent in argmax:
        return current_agent
    return min(argmax)


def build_adjacency(node, now_ms: float) -> AdjacencyView:
    """Local connectivity estimate from the node's own recent traffic.

    Within a multicast domain every live member hears every other, so each
    recently-heard member (and the node itself) is assigned the same
    symmetric degree: the number of other recently-heard members.
    """
    window = node.params.failure_timeout_ms
    recent = {
        peer
        for peer, heard in node.last_heard_ms.items()
        if peer in node.ait and now_ms - heard <= window
    }
    recent.add(node.self_entry.node_id)
    degree = len(recent) - 1
    return AdjacencyView({peer: degree for peer in recent})


def reevaluate_agent(node, net, evidence_ms: float | None = None) -> None:
    """Recompute the agent after an AIT mutation and act on a change.

    When this node elects itself it announces to its domain and registers
    with the virtual domain. `evidence_ms` is the timestamp of the last
    evidence for the previous agent (used for the election-latency metric);
    defaults to now for changes triggered by an explicit message.
    """
    if node.static_pin is not None or len(node.ait) == 0:
        return
    adj = None
    if node.policy is ElectionPolicy.HIGHEST_CONNECTIVITY:
        adj = build_adjacency(node, net.now)
    new_agent = select_agent(node.ait, node.agent, node.policy, adj)
    if new_agent == node.agent:
        return
    old = node.agent
    node.agent = new_agent
    if node.metrics_cb is not None:
        since = net.now - (evidence_ms if evidence_ms is not None else net.now)
        node.record_election(net, old, new_agent, since)
    if new_agent == node.self_entry.node_id:
        node.announce_agency(net)


__all__ = [
    "AdjacencyView",
    "ElectionPolicy",
    "EmptyDomain",
    "build_adjacency",
    "reevaluate_agent",
    "select_agent",
]
