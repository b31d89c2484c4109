"""Per-node membership state machine: join, leave and heartbeat-based
failure detection over the node's Adjacent Information Table.

Join: the newcomer multicasts JOIN with its own entry, members add it to
their AIT and answer ACCEPT by unicast; the newcomer builds its AIT from
the answers it collects during a fixed accept window, then becomes a
member and runs an election. Leave: a clean LEAVE multicast lets peers
drop the entry immediately. Failure: every member multicasts HEARTBEAT
each period and drops any peer silent for longer than the failure
timeout (three periods by default).

Two departures from the bare message set keep elections convergent:
the current agent answers a JOIN with a directed AGENT_ANNOUNCE so the
newcomer learns the incumbent (power ties would otherwise leave it
guessing), and a node that elects itself announces domain-wide.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

from . import discovery, election
from .core import (
    Ait,
    AitEntry,
    DomainId,
    DssmError,
    Message,
    MessageKind,
    NO_NODE,
    NodeId,
    message_size_bytes,
)
from .metrics import KIND_ELECTION_LATENCY, KIND_JOIN_LATENCY, MetricsRecord
from .simnet import LinkConfig, Network

log = logging.getLogger(__name__)

TIMER_JOIN_DEADLINE = "join_deadline"
TIMER_HEARTBEAT = "heartbeat"


class AlreadyMember(DssmError):
    pass


class NotMember(DssmError):
    pass


class Phase(Enum):
    OFFLINE = "offline"
    JOINING = "joining"
    MEMBER = "member"
    LEFT = "left"


@dataclass
class ProtocolParams:
    accept_window_ms: float = 50.0
    heartbeat_period_ms: float = 1000.0
    failure_timeout_ms: float = 3000.0
    response_window_ms: float = 100.0

    @classmethod
    def from_links(cls, intra: LinkConfig, inter: LinkConfig,
                   heartbeat_period_ms: float = 1000.0) -> "ProtocolParams":
        """Defaults derived from the link model: the accept window covers a
        round trip on the slow path, the response window two inter-domain
        round trips, and the failure timeout is three missed heartbeats."""
        join_rt = 2 * intra.transit_ms(message_size_bytes(MessageKind.JOIN))
        query_rt = 2 * inter.transit_ms(message_size_bytes(MessageKind.QUERY_RESP))
        return cls(
            accept_window_ms=max(10.0, join_rt),
            heartbeat_period_ms=heartbeat_period_ms,
            failure_timeout_ms=3 * heartbeat_period_ms,
            response_window_ms=max(10.0, 2 * query_rt),
        )


class GosNode:
    """A Grid Oriented Storage device: one protocol endpoint.

    Owned and mutated only by the network event loop. The node's
    `self_entry` is its live resource snapshot; capacity changes replace
    it and ride out on the next heartbeat.
    """

    def __init__(
        self,
        entry: AitEntry,
        domain: DomainId,
        params: ProtocolParams | None = None,
        policy: election.ElectionPolicy = election.ElectionPolicy.MAX_POWER,
        registry=None,
    ):
        self.self_entry = entry
        self.domain = domain
        self.params = params or ProtocolParams()
        self.policy = policy
        self.registry = registry

        self.phase = Phase.OFFLINE
        self.ait = Ait()
        self.agent: NodeId = NO_NODE
        self.last_heard_ms: dict[NodeId, float] = {}
        self.join_deadline_ms: float | None = None
        self.pending_queries: dict[int, discovery.PendingQuery] = {}

        # Wired by the scenario runner; None outside scenarios.
        self.metrics_cb = None
        self.query_cb = None
        # Static-comparison mode: agent pinned, no re-election, stale AIT
        # entries are not refreshed by heartbeats.
        self.static_pin: NodeId | None = None

        self._join_started_ms: float | None = None

    @property
    def node_id(self) -> NodeId:
        return self.self_entry.node_id

    @property
    def is_member(self) -> bool:
        return self.phase is Phase.MEMBER

    @property
    def is_agent(self) -> bool:
        return self.phase is Phase.MEMBER and self.agent == self.node_id

    # -- membership operations ----------------------------------------------

    def initiate_join(self, net: Network) -> None:
        """Multicast JOIN and start collecting ACCEPTs for the window."""
        if self.phase is not Phase.OFFLINE:
            raise AlreadyMember(f"node {self.node_id} is {self.phase.value}, not offline")
        self.phase = Phase.JOINING
        self.ait = Ait([self.self_entry])
        self.last_heard_ms = {}
        self._join_started_ms = net.now
        self.join_deadline_ms = net.now + self.params.accept_window_ms
        net.send_multicast(self.node_id, self.domain, Message(MessageKind.JOIN, self.self_entry))
        net.set_timer(self.node_id, TIMER_JOIN_DEADLINE, self.params.accept_window_ms)

    def initiate_leave(self, net: Network) -> None:
        """Multicast LEAVE and forget all domain state."""
        if self.phase is not Phase.MEMBER:
            raise NotMember(f"node {self.node_id} is {self.phase.value}, not a member")
        net.send_multicast(self.node_id, self.domain, Message(MessageKind.LEAVE, self.self_entry))
        self.phase = Phase.LEFT
        self.ait.clear()
        self.agent = NO_NODE
        self.last_heard_ms.clear()
        self.join_deadline_ms = None
        net.cancel_timer(self.node_id, TIMER_HEARTBEAT)
        net.virtual_members.discard(self.node_id)

    def reset_offline(self) -> None:
        """Return a Left (or crashed-and-revived) node to Offline so it can
        join again. Scenario-level convenience; protocol state is cleared."""
        self.phase = Phase.OFFLINE
        self.ait.clear()
        self.agent = NO_NODE
        self.last_heard_ms.clear()
        self.join_deadline_ms = None
        self.pending_queries.clear()

    def adjust_capacity(self, delta_mb: float) -> None:
        """Apply an allocation (negative) or release (positive) locally.
        Peers learn the new capacity from the next heartbeat."""
        new_cap = self.self_entry.storage_capacity_mb + delta_mb
        self.self_entry = replace(self.self_entry, storage_capacity_mb=new_cap)
        if self.phase in (Phase.JOINING, Phase.MEMBER):
            self.ait.upsert(self.self_entry)

    # -- event-loop entry points ---------------------------------------------

    def on_message(self, net: Network, msg: Message) -> None:
        kind = msg.kind
        if kind is MessageKind.JOIN:
            self._on_join(net, msg.sender)
        elif kind is MessageKind.ACCEPT:
            self._on_accept(net, msg.sender)
        elif kind is MessageKind.LEAVE:
            self._on_leave(net, msg.sender.node_id)
        elif kind is MessageKind.HEARTBEAT:
            self._on_heartbeat(net, msg.sender)
        elif kind is MessageKind.AGENT_ANNOUNCE:
            self._on_agent_announce(net, msg.sender)
        elif kind is MessageKind.QUERY:
            discovery.handle_query(self, net, msg)
        elif kind is MessageKind.QUERY_RESP:
            discovery.handle_query_resp(self, net, msg)
        # DATA is a sink: it models bulk payload, nothing to do.

    def on_timer(self, net: Network, tag: str) -> None:
        if tag == TIMER_JOIN_DEADLINE:
            self._finish_join(net)
        elif tag == TIMER_HEARTBEAT:
            self.heartbeat_tick(net)
        elif tag.startswith(discovery.QUERY_TIMER_PREFIX):
            discovery.finalize_query(self, net, int(tag[len(discovery.QUERY_TIMER_PREFIX):]))

    # -- handlers --------------------------------------------------------------

    def _on_join(self, net: Network, joiner: AitEntry) -> None:
        if self.phase is not Phase.MEMBER:
            log.debug("node %d: JOIN from %d ignored in phase %s",
                      self.node_id, joiner.node_id, self.phase.value)
            return
        self._learn(net, joiner)
        net.send_unicast(self.node_id, joiner.node_id,
                         Message(MessageKind.ACCEPT, self.self_entry))
        election.reevaluate_agent(self, net)
        if self.agent == self.node_id:
            # Directed announce so the newcomer learns the incumbent.
            net.send_unicast(self.node_id, joiner.node_id,
                             Message(MessageKind.AGENT_ANNOUNCE, self.self_entry))

    def _on_accept(self, net: Network, accepter: AitEntry) -> None:
        if self.phase is Phase.JOINING:
            self._learn(net, accepter)
        elif self.phase is Phase.MEMBER:
            # Late ACCEPT after the window: plain AIT refresh.
            self._learn(net, accepter)
            election.reevaluate_agent(self, net)
        else:
            log.debug("node %d: ACCEPT from %d ignored in phase %s",
                      self.node_id, accepter.node_id, self.phase.value)

    def _finish_join(self, net: Network) -> None:
        if self.phase is not Phase.JOINING:
            return
        self.phase = Phase.MEMBER
        self.join_deadline_ms = None
        if self.metrics_cb is not None and self._join_started_ms is not None:
            self.metrics_cb(MetricsRecord(
                KIND_JOIN_LATENCY, net.now - self._join_started_ms, "ms", net.now,
                {"node": str(self.node_id)},
            ))
        if self.static_pin is not None:
            self.agent = self.static_pin
        else:
            election.reevaluate_agent(self, net)
        net.set_timer(self.node_id, TIMER_HEARTBEAT, self.params.heartbeat_period_ms)

    def _on_leave(self, net: Network, leaver: NodeId) -> None:
        if self.phase is not Phase.MEMBER:
            log.debug("node %d: LEAVE from %d ignored in phase %s",
                      self.node_id, leaver, self.phase.value)
            return
        if leaver == self.agent:
            self.agent = NO_NODE
        self.ait.remove(leaver)
        self.last_heard_ms.pop(leaver, None)
        election.reevaluate_agent(self, net)

    def _on_heartbeat(self, net: Network, sender: AitEntry) -> None:
        if self.phase not in (Phase.JOINING, Phase.MEMBER):
            return
        if self.static_pin is not None and sender.node_id in self.ait:
            # Liveness only; capacity stays as first seen.
            self.last_heard_ms[sender.node_id] = net.now
            return
        self._learn(net, sender)
        if self.phase is Phase.MEMBER:
            election.reevaluate_agent(self, net)

    def _on_agent_announce(self, net: Network, sender: AitEntry) -> None:
        if self.phase is Phase.JOINING:
            self._learn(net, sender)
            self.agent = sender.node_id
        elif self.phase is Phase.MEMBER:
            self._learn(net, sender)
            election.reevaluate_agent(self, net)

    def heartbeat_tick(self, net: Network) -> None:
        """Multicast a fresh self entry, drop silent peers, re-arm."""
        if self.phase is not Phase.MEMBER:
            return
        net.send_multicast(self.node_id, self.domain,
                           Message(MessageKind.HEARTBEAT, self.self_entry))
        timed_out = [
            peer for peer, heard in self.last_heard_ms.items()
            if peer in self.ait and net.now - heard > self.params.failure_timeout_ms
        ]
        if timed_out:
            evidence = min(self.last_heard_ms[p] for p in timed_out)
            agent_lost = False
            for peer in timed_out:
                self.ait.remove(peer)
                del self.last_heard_ms[peer]
                if peer == self.agent:
                    agent_lost = True
            if agent_lost:
                self.agent = NO_NODE
            election.reevaluate_agent(self, net, evidence_ms=evidence)
        net.set_timer(self.node_id, TIMER_HEARTBEAT, self.params.heartbeat_period_ms)

    # -- election plumbing ------------------------------------------------------

    def announce_agency(self, net: Network) -> None:
        """Called when this node elected itself: tell the domain, join the
        virtual domain."""
        net.send_multicast(self.node_id, self.domain,
                           Message(MessageKind.AGENT_ANNOUNCE, self.self_entry))
        if self.registry is not None:
            adj = None
            if self.policy is election.ElectionPolicy.HIGHEST_CONNECTIVITY:
                adj = election.build_adjacency(self, net.now)
            self.registry.register_agent(
                self.self_entry,
                discovery.standard_endpoints(self.self_entry),
                domain=self.domain,
                ait=self.ait,
                policy=self.policy,
                adj=adj,
            )
        else:
            net.virtual_members.add(self.node_id)

    def record_election(self, net: Network, old: NodeId, new: NodeId, since_ms: float) -> None:
        self.metrics_cb(MetricsRecord(
            KIND_ELECTION_LATENCY, since_ms, "ms", net.now,
            {"node": str(self.node_id), "old": str(old), "new": str(new)},
        ))

    def _learn(self, net: Network, entry: AitEntry) -> None:
        self.ait.upsert(entry)
        self.last_heard_ms[entry.node_id] = net.now

    def __repr__(self) -> str:
        return (f"GosNode(id={self.node_id}, domain={self.domain}, "
                f"phase={self.phase.value}, agent={self.agent}, |ait|={len(self.ait)})")
