"""Shared helpers: hand-wired protocol worlds without the scenario layer."""

from dssm.core import AitEntry
from dssm.discovery import VirtualDomain
from dssm.election import ElectionPolicy
from dssm.membership import GosNode, ProtocolParams
from dssm.simnet import LinkConfig, Network, Topology

INTRA = LinkConfig(delay_ms=1.0, drop_probability=0.0, bandwidth_mbps=100.0)
INTER = LinkConfig(delay_ms=20.0, drop_probability=0.0, bandwidth_mbps=100.0)
PARAMS = ProtocolParams(
    accept_window_ms=20.0,
    heartbeat_period_ms=200.0,
    failure_timeout_ms=600.0,
    response_window_ms=100.0,
)


class World:
    """A network plus protocol nodes, wired like the scenario runner but
    driven directly from tests."""

    def __init__(self, specs, seed=42, intra=INTRA, inter=INTER, params=PARAMS,
                 policy=ElectionPolicy.MAX_POWER):
        self.topology = Topology({nid: dom for nid, dom, _, _ in specs}, intra, inter)
        self.net = Network(self.topology, seed)
        self.registry = VirtualDomain(self.net)
        self.nodes = {}
        for nid, dom, cap, power in specs:
            entry = AitEntry(nid, f"10.0.{dom}.{nid % 250 + 1}", cap, power)
            node = GosNode(entry, dom, params, policy, self.registry)
            self.nodes[nid] = node
            self.net.register_handler(nid, node)

    def join(self, node_id, at=None):
        if at is not None:
            self.net.run_until(at)
        self.nodes[node_id].initiate_join(self.net)

    def join_all(self, start=0.0, gap=50.0):
        t = start
        for nid in sorted(self.nodes):
            self.join(nid, at=t)
            t += gap
        return t

    def leave(self, node_id, at=None):
        if at is not None:
            self.net.run_until(at)
        self.nodes[node_id].initiate_leave(self.net)

    def crash(self, node_id, at=None):
        if at is not None:
            self.net.run_until(at)
        self.net.crash(node_id)

    def settle(self, until):
        self.net.run_until(until)

    def members(self, domain=None):
        return [
            n for _, n in sorted(self.nodes.items())
            if n.is_member and not self.net.is_crashed(n.node_id)
            and (domain is None or n.domain == domain)
        ]

    def sends(self, kind_name, src=None):
        return [
            r for r in self.net.trace
            if r.kind == "send" and r.msg_kind == kind_name
            and (src is None or r.src == str(src))
        ]

    def delivers(self, kind_name=None):
        return [
            r for r in self.net.trace
            if r.kind == "deliver" and (kind_name is None or r.msg_kind == kind_name)
        ]
