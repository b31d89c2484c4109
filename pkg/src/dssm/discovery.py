"""Upper-level virtual domain: agent registry, service endpoint directory,
cross-domain storage discovery, capacity allocation and bulk transfer.

Discovery is two-stage. The requester's domain agent first scans its own
AIT for a candidate with enough remaining capacity, preferring the largest
remainder (lowest id on ties). Only when the domain cannot satisfy the
request does it multicast QUERY to the virtual group and collect
QUERY_RESP answers for a response window, applying the same best-fit rule
across the remote candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from urllib.parse import urlparse

from .core import (
    Ait,
    AitEntry,
    DomainId,
    DssmError,
    InvalidValue,
    Message,
    MessageKind,
    NodeId,
)
from .election import ElectionPolicy, select_agent
from .metrics import KIND_THROUGHPUT, KIND_TRANSFER_RESPONSE, MetricsRecord
from .simnet import Network, UnknownNode, VIRTUAL

QUERY_TIMER_PREFIX = "query:"
SERVICE_PORT = 8080


class NotAnAgent(DssmError):
    pass


class NoAgent(DssmError):
    """The requester's domain has no live agent to serve the query."""


class InsufficientCapacity(DssmError):
    pass


class AlreadyReleased(DssmError):
    pass


class ServiceKind(Enum):
    STORAGE = "storservice"
    MANAGEMENT = "mgtservice"
    SECURITY = "secservice"
    COMMUNICATION = "comservice"


@dataclass(frozen=True)
class ServiceEndpoint:
    agent: NodeId
    kind: ServiceKind
    url: str


def endpoint_url(ip, kind: ServiceKind, port: int = SERVICE_PORT) -> str:
    return f"http://{ip}:{port}/srmd/services/{kind.value}"


def parse_endpoint_url(url: str) -> tuple[str, int, ServiceKind]:
    """Split an endpoint url back into (ip, port, kind)."""
    parts = urlparse(url)
    prefix, _, kind = parts.path.rpartition("/")
    if parts.scheme != "http" or prefix != "/srmd/services":
        raise InvalidValue(f"not an SRMD endpoint url: {url}")
    return parts.hostname, parts.port, ServiceKind(kind)


def standard_endpoints(agent: AitEntry) -> list[ServiceEndpoint]:
    """The four service endpoints every agent exposes."""
    return [
        ServiceEndpoint(agent.node_id, kind, endpoint_url(agent.ip, kind))
        for kind in ServiceKind
    ]


class VirtualDomain:
    """Registry of the currently elected agent of each physical domain."""

    def __init__(self, net: Network | None = None):
        self._net = net
        self._agents: dict[DomainId, tuple[AitEntry, list[ServiceEndpoint]]] = {}

    def register_agent(
        self,
        agent: AitEntry,
        endpoints: list[ServiceEndpoint],
        *,
        domain: DomainId,
        ait: Ait,
        policy: ElectionPolicy = ElectionPolicy.MAX_POWER,
        adj=None,
    ) -> None:
        """Admit an agent, replacing any previous agent of the same domain.

        The claim is checked against the registrant's own AIT; a node that
        the election would not pick is refused.
        """
        if agent.node_id not in ait or select_agent(ait, agent.node_id, policy, adj) != agent.node_id:
            raise NotAnAgent(f"node {agent.node_id} is not the computed agent of domain {domain}")
        self._admit(agent, endpoints, domain)

    def register_pinned(self, agent: AitEntry, endpoints: list[ServiceEndpoint],
                        *, domain: DomainId) -> None:
        """Unchecked registration for the static-comparison baseline."""
        self._admit(agent, endpoints, domain)

    def _admit(self, agent, endpoints, domain) -> None:
        prev = self._agents.get(domain)
        self._agents[domain] = (agent, list(endpoints))
        if self._net is not None:
            if prev is not None:
                self._net.virtual_members.discard(prev[0].node_id)
            self._net.virtual_members.add(agent.node_id)

    def agent_of(self, domain: DomainId) -> AitEntry | None:
        pair = self._agents.get(domain)
        return pair[0] if pair else None

    def agents(self) -> dict[DomainId, AitEntry]:
        return {d: pair[0] for d, pair in sorted(self._agents.items())}

    def lookup_service(self, kind: ServiceKind) -> list[ServiceEndpoint]:
        """All endpoints of a kind across registered agents, by domain id."""
        found = []
        for _, (_, endpoints) in sorted(self._agents.items()):
            found.extend(ep for ep in endpoints if ep.kind is kind)
        return found

    def __len__(self) -> int:
        return len(self._agents)


@dataclass(frozen=True)
class StorageQuery:
    requester: NodeId
    required_mb: float
    query_id: int

    def __post_init__(self):
        if math.isnan(self.required_mb) or self.required_mb <= 0:
            raise InvalidValue(f"required_mb {self.required_mb} must be > 0")


@dataclass
class PendingQuery:
    query: StorageQuery
    started_ms: float
    best: AitEntry | None = None
    on_complete: object = None


def best_fit(ait: Ait, required_mb: float) -> AitEntry | None:
    """Largest remaining capacity >= required_mb, lowest node id on ties."""
    candidates = [e for e in ait.entries() if e.storage_capacity_mb >= required_mb]
    if not candidates:
        return None
    return max(candidates, key=lambda e: (e.storage_capacity_mb, -e.node_id))


def _better(a: AitEntry | None, b: AitEntry) -> AitEntry:
    if a is None:
        return b
    return max((a, b), key=lambda e: (e.storage_capacity_mb, -e.node_id))


def find_storage(agent_node, net: Network, query: StorageQuery, on_complete=None) -> None:
    """Run a storage query on the requester's domain agent.

    Completion is asynchronous: `on_complete(query, candidate, elapsed_ms,
    route)` fires immediately for a locally satisfied query (route
    "local") or at the end of the response window (route "remote",
    candidate None when no domain qualifies).
    """
    if not agent_node.is_agent:
        raise NoAgent(f"node {agent_node.node_id} does not hold agency")
    local = best_fit(agent_node.ait, query.required_mb)
    if local is not None:
        _complete(agent_node, net, query, local, 0.0, "local", on_complete)
        return
    agent_node.pending_queries[query.query_id] = PendingQuery(query, net.now, on_complete=on_complete)
    net.send_multicast(
        agent_node.node_id,
        VIRTUAL,
        Message(MessageKind.QUERY, agent_node.self_entry,
                query_id=query.query_id, required_mb=query.required_mb),
    )
    net.set_timer(agent_node.node_id, f"{QUERY_TIMER_PREFIX}{query.query_id}",
                  agent_node.params.response_window_ms)


def handle_query(node, net: Network, msg: Message) -> None:
    """A remote agent answers with its domain's best candidate (or none)."""
    if not node.is_agent:
        return
    candidate = best_fit(node.ait, msg.required_mb)
    net.send_unicast(
        node.node_id,
        msg.sender.node_id,
        Message(MessageKind.QUERY_RESP, node.self_entry,
                query_id=msg.query_id, candidate=candidate),
    )


def handle_query_resp(node, net: Network, msg: Message) -> None:
    pending = node.pending_queries.get(msg.query_id)
    if pending is None:
        return  # late or unsolicited answer
    if msg.candidate is not None:
        pending.best = _better(pending.best, msg.candidate)


def finalize_query(node, net: Network, query_id: int) -> None:
    pending = node.pending_queries.pop(query_id, None)
    if pending is None:
        return
    _complete(node, net, pending.query, pending.best,
              net.now - pending.started_ms, "remote", pending.on_complete)


def _complete(node, net, query, candidate, elapsed_ms, route, on_complete) -> None:
    cb = on_complete or node.query_cb
    if cb is not None:
        cb(query, candidate, elapsed_ms, route)


@dataclass
class Allocation:
    allocation_id: int
    node: NodeId
    size_mb: float
    active: bool = True


class AllocationLedger:
    """Tracks live allocations and applies them to the hosting nodes.

    Discovery answers from possibly stale AITs; allocation re-validates
    against the target's actual remaining capacity.
    """

    def __init__(self, nodes, net: Network | None = None):
        self._nodes = nodes
        self._net = net
        self._next_id = 1
        self.allocations: dict[int, Allocation] = {}

    def allocate(self, target: NodeId, size_mb: float) -> Allocation:
        if math.isnan(size_mb) or size_mb <= 0:
            raise InvalidValue(f"size_mb {size_mb} must be > 0")
        node = self._nodes.get(target)
        if node is None or (self._net is not None and self._net.is_crashed(target)):
            raise UnknownNode(f"node {target} unknown or dead")
        if node.self_entry.storage_capacity_mb < size_mb:
            raise InsufficientCapacity(
                f"node {target} has {node.self_entry.storage_capacity_mb} MB, "
                f"needs {size_mb}"
            )
        node.adjust_capacity(-size_mb)
        alloc = Allocation(self._next_id, target, size_mb)
        self._next_id += 1
        self.allocations[alloc.allocation_id] = alloc
        return alloc

    def release(self, alloc: Allocation) -> None:
        if not alloc.active:
            raise AlreadyReleased(f"allocation {alloc.allocation_id} already released")
        alloc.active = False
        node = self._nodes.get(alloc.node)
        if node is not None:
            node.adjust_capacity(alloc.size_mb)


def transfer_file(net: Network, sender: AitEntry, to: NodeId, size_mb: float
                  ) -> tuple[MetricsRecord, MetricsRecord]:
    """Push a size_mb file from sender to `to` over the governing link.

    Returns (response-time record, achieved-throughput record); the DATA
    message itself rides the event queue so the transfer shows up in the
    trace at exactly the computed response time.
    """
    if math.isnan(size_mb) or size_mb <= 0:
        raise InvalidValue(f"size_mb {size_mb} must be > 0")
    link = net.link_between(sender.node_id, to)
    bits = size_mb * 8 * 1024 * 1024
    response_ms = link.delay_ms + bits / (link.bandwidth_mbps * 1000.0)
    achieved_mbps = bits / (response_ms / 1000.0) / 1e6
    labels = {
        "from": str(sender.node_id),
        "to": str(to),
        "size_mb": repr(size_mb),
        "delay_ms": repr(link.delay_ms),
        "bandwidth_mbps": repr(link.bandwidth_mbps),
    }
    net.send_unicast(sender.node_id, to,
                     Message(MessageKind.DATA, sender, size_mb=size_mb))
    return (
        MetricsRecord(KIND_TRANSFER_RESPONSE, response_ms, "ms", net.now, dict(labels)),
        MetricsRecord(KIND_THROUGHPUT, achieved_mbps, "Mbps", net.now, dict(labels)),
    )
