"""Deterministic discrete-event network.

Unicast, domain-scoped multicast, one-shot timers and a link model with
configurable delay, drop probability and bandwidth. The event loop is
single-threaded; (topology, seed) fully determine the run. Every drop
decision consumes exactly one draw from the seeded generator, so traces
from identical inputs are byte-identical.

Delivery latency for a message of s bytes over a link is

    delay_ms + s * 8 / (bandwidth_mbps * 1000)   [ms]

Trace rows record sends (one row per unicast or multicast call), actual
deliveries, and fired timers. Deliveries addressed to a crashed node are
still traced (the packet arrived) but no handler runs; timers owned by a
crashed node vanish silently.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

from .core import (
    DomainId,
    DssmError,
    Message,
    NodeId,
    transit_size_bytes,
)

# Distinguished multicast group holding the current domain agents.
VIRTUAL: DomainId = -1


class UnknownNode(DssmError):
    """A node id that is not part of the topology."""


class InvalidTopology(DssmError):
    pass


@dataclass
class LinkConfig:
    delay_ms: float
    drop_probability: float
    bandwidth_mbps: float

    def __post_init__(self):
        if self.delay_ms < 0:
            raise InvalidTopology(f"delay_ms {self.delay_ms} must be >= 0")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise InvalidTopology(
                f"drop_probability {self.drop_probability} must be in [0, 1]"
            )
        if self.bandwidth_mbps <= 0:
            raise InvalidTopology(f"bandwidth_mbps {self.bandwidth_mbps} must be > 0")

    def transit_ms(self, size_bytes: float) -> float:
        """Propagation plus serialization time for size_bytes."""
        return self.delay_ms + size_bytes * 8.0 / (self.bandwidth_mbps * 1000.0)


@dataclass
class Topology:
    """Node -> domain assignment plus the two link classes."""

    nodes: dict[NodeId, DomainId]
    intra_domain_link: LinkConfig
    inter_domain_link: LinkConfig

    def validate(self) -> None:
        for node, domain in self.nodes.items():
            if domain is None:
                raise InvalidTopology(f"node {node} has no domain")
            if not 0 <= domain <= 2**16 - 1:
                raise InvalidTopology(f"domain {domain} outside 0..65535")
            if not 1 <= node <= 2**32 - 1:
                raise InvalidTopology(f"node id {node} outside 1..2^32-1")


@dataclass(frozen=True)
class SimEvent:
    """Queued event: a message delivery or a timer firing.

    Events are processed in (time_ms, seq) order; seq strictly increases
    with scheduling order and breaks simultaneity ties deterministically.
    """

    time_ms: float
    seq: int
    kind: str  # "deliver" | "timer"
    dst: NodeId
    msg: Message | None = None
    tag: str | None = None


@dataclass(frozen=True)
class TraceRow:
    time_ms: float
    seq: int
    kind: str  # "send" | "deliver" | "timer"
    src: str
    dst: str
    msg_kind: str
    size_bytes: float

    def csv(self) -> str:
        size = repr(self.size_bytes) if isinstance(self.size_bytes, float) else str(self.size_bytes)
        return f"{self.time_ms!r},{self.seq},{self.kind},{self.src},{self.dst},{self.msg_kind},{size}"


TRACE_HEADER = "time_ms,seq,kind,from,to,msg_kind,size_bytes"


def export_trace(trace: list[TraceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(TRACE_HEADER + "\n")
        for row in trace:
            fh.write(row.csv() + "\n")


class Network:
    """The simulated network. Never shared across threads."""

    def __init__(self, topology: Topology, seed: int):
        topology.validate()
        self.topology = topology
        self.intra_link = topology.intra_domain_link
        self.inter_link = topology.inter_domain_link
        self.rng = random.Random(seed)
        self.now = 0.0
        self.handlers: dict[NodeId, object] = {}
        self.crashed: set[NodeId] = set()
        self.virtual_members: set[NodeId] = set()
        self.trace: list[TraceRow] = []
        self._heap: list[tuple[float, int, SimEvent]] = []
        self._seq = 0
        self._timers: dict[tuple[NodeId, str], int] = {}

    # -- wiring ------------------------------------------------------------

    def register_handler(self, node_id: NodeId, handler) -> None:
        """Attach the protocol object that receives this node's events.

        The handler must expose on_message(net, msg) and on_timer(net, tag).
        """
        self._require(node_id)
        self.handlers[node_id] = handler

    def crash(self, node_id: NodeId) -> None:
        """Silence a node: it stops sending, receiving and ticking."""
        self._require(node_id)
        self.crashed.add(node_id)

    def revive(self, node_id: NodeId) -> None:
        self.crashed.discard(node_id)

    def is_crashed(self, node_id: NodeId) -> bool:
        return node_id in self.crashed

    def domain_members(self, domain: DomainId) -> list[NodeId]:
        return sorted(n for n, d in self.topology.nodes.items() if d == domain)

    def domain_of(self, node_id: NodeId) -> DomainId:
        self._require(node_id)
        return self.topology.nodes[node_id]

    def link_between(self, a: NodeId, b: NodeId) -> LinkConfig:
        self._require(a)
        self._require(b)
        same = self.topology.nodes[a] == self.topology.nodes[b]
        return self.intra_link if same else self.inter_link

    # -- traffic -----------------------------------------------------------

    def send_unicast(self, src: NodeId, dst: NodeId, msg: Message) -> None:
        self._require(src)
        self._require(dst)
        size = transit_size_bytes(msg)
        self._trace("send", str(src), str(dst), msg.kind.name, size)
        self._attempt(src, dst, msg, self.link_between(src, dst), size)

    def send_multicast(self, src: NodeId, group: DomainId, msg: Message) -> None:
        """One independent delivery attempt per group member except the
        sender, each with its own drop draw. VIRTUAL targets the current
        agents over the inter-domain link."""
        self._require(src)
        if group == VIRTUAL:
            members = sorted(self.virtual_members)
            link, label = self.inter_link, "virtual"
        else:
            members = self.domain_members(group)
            link, label = self.intra_link, f"domain{group}"
        size = transit_size_bytes(msg)
        self._trace("send", str(src), label, msg.kind.name, size)
        for member in members:
            if member != src:
                self._attempt(src, member, msg, link, size)

    def set_timer(self, owner: NodeId, tag: str, fire_in_ms: float) -> None:
        """Schedule a one-shot timer; re-setting (owner, tag) replaces any
        pending one."""
        self._require(owner)
        event = SimEvent(self.now + fire_in_ms, self._next_seq(), "timer", owner, tag=tag)
        self._timers[(owner, tag)] = event.seq
        heapq.heappush(self._heap, (event.time_ms, event.seq, event))

    def cancel_timer(self, owner: NodeId, tag: str) -> None:
        self._timers.pop((owner, tag), None)

    # -- event loop --------------------------------------------------------

    def pending(self) -> int:
        return len(self._heap)

    def run_until(self, time_ms: float) -> None:
        """Process every event due at or before time_ms, then advance the
        clock to exactly time_ms."""
        while self._heap and self._heap[0][0] <= time_ms:
            self._step()
        self.now = max(self.now, time_ms)

    def run_until_quiescent(self, max_time_ms: float) -> list[TraceRow]:
        """Drain the queue, stopping once it is empty or the next event lies
        beyond max_time_ms. Returns the full trace collected so far."""
        while self._heap and self._heap[0][0] <= max_time_ms:
            self._step()
        return self.trace

    # -- internals ----------------------------------------------------------

    def _require(self, node_id: NodeId) -> None:
        if node_id not in self.topology.nodes:
            raise UnknownNode(f"node {node_id} not in topology")

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _trace(self, kind, src, dst, msg_kind, size) -> None:
        self.trace.append(TraceRow(self.now, self._next_seq(), kind, src, dst, msg_kind, size))

    def _attempt(self, src, dst, msg, link: LinkConfig, size: float) -> None:
        # One draw per attempt, delivered or not, keeps the stream aligned.
        if self.rng.random() < link.drop_probability:
            return
        event = SimEvent(self.now + link.transit_ms(size), self._next_seq(), "deliver", dst, msg=msg)
        heapq.heappush(self._heap, (event.time_ms, event.seq, event))

    def _step(self) -> None:
        _, _, event = heapq.heappop(self._heap)
        self.now = event.time_ms
        if event.kind == "deliver":
            msg = event.msg
            self.trace.append(
                TraceRow(
                    event.time_ms,
                    event.seq,
                    "deliver",
                    str(msg.sender.node_id),
                    str(event.dst),
                    msg.kind.name,
                    transit_size_bytes(msg),
                )
            )
            if event.dst not in self.crashed:
                handler = self.handlers.get(event.dst)
                if handler is not None:
                    handler.on_message(self, msg)
        else:
            key = (event.dst, event.tag)
            if self._timers.get(key) != event.seq:
                return  # replaced or cancelled
            del self._timers[key]
            if event.dst in self.crashed:
                return
            self.trace.append(
                TraceRow(event.time_ms, event.seq, "timer", "", str(event.dst), event.tag, 0)
            )
            handler = self.handlers.get(event.dst)
            if handler is not None:
                handler.on_timer(self, event.tag)


def create_network(topology: Topology, seed: int) -> Network:
    """Fresh network at virtual time 0 with an empty queue."""
    return Network(topology, seed)
