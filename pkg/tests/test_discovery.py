import random

import pytest

from conftest import World
from dssm.core import Ait, AitEntry, InvalidValue
from dssm.discovery import (
    AllocationLedger,
    AlreadyReleased,
    InsufficientCapacity,
    NoAgent,
    NotAnAgent,
    ServiceKind,
    StorageQuery,
    VirtualDomain,
    best_fit,
    find_storage,
    parse_endpoint_url,
    standard_endpoints,
    transfer_file,
)
from dssm.metrics import KIND_THROUGHPUT, KIND_TRANSFER_RESPONSE
from dssm.simnet import LinkConfig, UnknownNode

TWO_DOMAIN = [
    (1, 1, 1024.0, 2800.0),
    (2, 1, 2048.0, 2660.0),
    (3, 2, 8192.0, 2800.0),
]


def entry(nid, cap=100.0, power=2800.0, ip="192.168.16.10"):
    return AitEntry(nid, ip, cap, power)


# -- endpoints -------------------------------------------------------------


def test_endpoint_url_format():
    eps = standard_endpoints(entry(1, ip="192.168.16.10"))
    urls = {ep.kind: ep.url for ep in eps}
    assert urls[ServiceKind.STORAGE] == "http://192.168.16.10:8080/srmd/services/storservice"
    assert urls[ServiceKind.MANAGEMENT] == "http://192.168.16.10:8080/srmd/services/mgtservice"
    assert urls[ServiceKind.SECURITY] == "http://192.168.16.10:8080/srmd/services/secservice"
    assert urls[ServiceKind.COMMUNICATION] == "http://192.168.16.10:8080/srmd/services/comservice"


def test_endpoint_urls_parse_back():
    agent = entry(4, ip="10.20.30.40")
    for ep in standard_endpoints(agent):
        ip, port, kind = parse_endpoint_url(ep.url)
        assert ip == str(agent.ip)
        assert port == 8080
        assert kind is ep.kind


def test_parse_rejects_foreign_urls():
    with pytest.raises(InvalidValue):
        parse_endpoint_url("http://10.0.0.1:8080/other/services/storservice")


# -- registry ---------------------------------------------------------------


def member_ait(*entries):
    return Ait(entries)


def test_two_domains_register_two_agents():
    reg = VirtualDomain()
    a1, a2 = entry(1), entry(5, ip="10.0.2.1")
    reg.register_agent(a1, standard_endpoints(a1), domain=1, ait=member_ait(a1))
    reg.register_agent(a2, standard_endpoints(a2), domain=2, ait=member_ait(a2))
    assert len(reg) == 2
    assert reg.agent_of(1) == a1


def test_reregistration_replaces_same_domain():
    reg = VirtualDomain()
    old = entry(1, power=2660.0)
    new = entry(2, power=2800.0, ip="10.0.1.2")
    reg.register_agent(old, standard_endpoints(old), domain=1, ait=member_ait(old))
    reg.register_agent(new, standard_endpoints(new), domain=1,
                       ait=member_ait(old, new))
    assert len(reg) == 1
    assert reg.agent_of(1) == new


def test_non_agent_registration_refused():
    reg = VirtualDomain()
    weak = entry(2, power=2500.0, ip="10.0.1.2")
    strong = entry(1, power=2800.0)
    with pytest.raises(NotAnAgent):
        reg.register_agent(weak, standard_endpoints(weak), domain=1,
                           ait=member_ait(weak, strong))
    with pytest.raises(NotAnAgent):
        reg.register_agent(weak, standard_endpoints(weak), domain=1,
                           ait=member_ait(strong))  # not even a member


def test_lookup_service_ordered_by_domain():
    reg = VirtualDomain()
    a2 = entry(5, ip="10.0.2.1")
    a1 = entry(1, ip="10.0.1.1")
    reg.register_agent(a2, standard_endpoints(a2), domain=2, ait=member_ait(a2))
    reg.register_agent(a1, standard_endpoints(a1), domain=1, ait=member_ait(a1))
    eps = reg.lookup_service(ServiceKind.STORAGE)
    assert [ep.agent for ep in eps] == [1, 5]
    assert all(ep.kind is ServiceKind.STORAGE for ep in eps)
    assert reg.lookup_service(ServiceKind.SECURITY) != []
    empty = VirtualDomain()
    assert empty.lookup_service(ServiceKind.STORAGE) == []


# -- best fit ------------------------------------------------------------------


def test_best_fit_prefers_largest_then_lowest_id():
    ait = Ait([entry(1, cap=100.0), entry(2, cap=300.0, ip="10.0.0.2"),
               entry(3, cap=300.0, ip="10.0.0.3")])
    assert best_fit(ait, 50.0).node_id == 2
    assert best_fit(ait, 301.0) is None
    assert best_fit(ait, 300.0).node_id == 2


# -- find_storage over the wire ---------------------------------------------


def run_query(w, requester, required, at):
    w.settle(at)
    agent = w.nodes[w.nodes[requester].agent]
    done = []
    q = StorageQuery(requester, required, query_id=random.getrandbits(32))
    find_storage(agent, w.net, q, lambda *a: done.append(a))
    w.settle(at + 500.0)
    assert done, "query never completed"
    _, candidate, elapsed, route = done[0]
    return candidate, elapsed, route


def joined_two_domain():
    w = World(TWO_DOMAIN)
    w.join(1, at=0.0)
    w.join(2, at=50.0)
    w.join(3, at=100.0)
    w.settle(1000.0)
    return w


def test_local_query_sends_no_interdomain_traffic():
    w = joined_two_domain()
    before = len(w.sends("QUERY"))
    candidate, elapsed, route = run_query(w, 1, 1500.0, 1000.0)
    assert candidate.node_id == 2  # 2048 MB remaining wins locally
    assert route == "local"
    assert elapsed == 0.0
    assert len(w.sends("QUERY")) == before


def test_remote_query_one_round():
    w = joined_two_domain()
    candidate, elapsed, route = run_query(w, 1, 4096.0, 1000.0)
    assert candidate.node_id == 3
    assert route == "remote"
    assert elapsed == w.nodes[1].params.response_window_ms
    assert len(w.sends("QUERY")) == 1
    assert len(w.sends("QUERY_RESP")) == 1


def test_unsatisfiable_query_returns_none():
    w = joined_two_domain()
    candidate, _, route = run_query(w, 1, 10_000_000.0, 1000.0)
    assert candidate is None
    assert route == "remote"


def test_query_on_non_agent_raises():
    w = joined_two_domain()
    q = StorageQuery(2, 10.0, query_id=1)
    with pytest.raises(NoAgent):
        find_storage(w.nodes[2], w.net, q)  # node 2 is not the agent


def test_query_requires_positive_size():
    with pytest.raises(InvalidValue):
        StorageQuery(1, 0.0, query_id=1)


def oracle_two_stage(live, requester_domain, required):
    """Direct scan honoring the local-first contract."""
    def best(cands):
        qualified = [(cap, -nid) for nid, (dom, cap) in cands if cap >= required]
        return -max(qualified)[1] if qualified else None

    items = list(live.items())
    local = best([(n, v) for n, v in items if v[0] == requester_domain])
    if local is not None:
        return local
    return best([(n, v) for n, v in items if v[0] != requester_domain])


def test_random_topologies_match_oracle():
    rng = random.Random(5150)
    for trial in range(60):
        n_domains = rng.randint(1, 3)
        n_nodes = rng.randint(1, 10)
        specs = []
        for nid in range(1, n_nodes + 1):
            dom = rng.randint(1, n_domains)
            cap = rng.choice([64.0, 256.0, 1024.0, 4096.0])
            power = rng.choice([2500.0, 2660.0, 2800.0])
            specs.append((nid, dom, cap, power))
        w = World(specs, seed=trial)
        t = w.join_all(start=0.0, gap=50.0)
        w.settle(t + 1000.0)
        live = {nid: (dom, cap) for nid, dom, cap, _ in specs}
        for _ in range(10):
            requester = rng.randint(1, n_nodes)
            required = rng.choice([32.0, 128.0, 512.0, 2048.0, 8192.0])
            agent_id = w.nodes[requester].agent
            done = []
            q = StorageQuery(requester, required, query_id=rng.getrandbits(32))
            find_storage(w.nodes[agent_id], w.net, q, lambda *a: done.append(a))
            w.settle(w.net.now + 500.0)
            got = done[0][1].node_id if done[0][1] else None
            want = oracle_two_stage(live, w.nodes[requester].domain, required)
            assert got == want, f"trial {trial}: got {got}, want {want}"


# -- allocation ----------------------------------------------------------------


def allocation_world():
    w = World(TWO_DOMAIN)
    w.join_all()
    w.settle(500.0)
    return w, AllocationLedger(w.nodes, w.net)


def test_allocate_reduces_capacity():
    w, ledger = allocation_world()
    alloc = ledger.allocate(1, 512.0)
    assert alloc.active
    assert w.nodes[1].self_entry.storage_capacity_mb == 512.0


def test_allocate_exact_boundary():
    w, ledger = allocation_world()
    ledger.allocate(1, 1024.0)
    assert w.nodes[1].self_entry.storage_capacity_mb == 0.0
    with pytest.raises(InsufficientCapacity):
        ledger.allocate(1, 0.001)


def test_overallocation_rejected_capacity_unchanged():
    w, ledger = allocation_world()
    with pytest.raises(InsufficientCapacity):
        ledger.allocate(1, 1024.5)
    assert w.nodes[1].self_entry.storage_capacity_mb == 1024.0


def test_release_restores_and_double_release_fails():
    w, ledger = allocation_world()
    alloc = ledger.allocate(2, 1000.0)
    ledger.release(alloc)
    assert w.nodes[2].self_entry.storage_capacity_mb == 2048.0
    with pytest.raises(AlreadyReleased):
        ledger.release(alloc)


def test_allocate_unknown_or_dead_node():
    w, ledger = allocation_world()
    with pytest.raises(UnknownNode):
        ledger.allocate(42, 1.0)
    w.crash(3)
    with pytest.raises(UnknownNode):
        ledger.allocate(3, 1.0)


def test_interleaved_allocations_conserve_capacity():
    w, ledger = allocation_world()
    rng = random.Random(13)
    initial = {nid: n.self_entry.storage_capacity_mb for nid, n in w.nodes.items()}
    open_allocs = []
    for _ in range(300):
        if open_allocs and rng.random() < 0.45:
            ledger.release(open_allocs.pop(rng.randrange(len(open_allocs))))
        else:
            target = rng.choice([1, 2, 3])
            size = rng.choice([16.0, 64.0, 128.0])
            try:
                open_allocs.append(ledger.allocate(target, size))
            except InsufficientCapacity:
                pass
        for nid, node in w.nodes.items():
            held = sum(a.size_mb for a in open_allocs if a.node == nid)
            assert node.self_entry.storage_capacity_mb + held == initial[nid]


def test_allocation_propagates_via_heartbeat():
    w, ledger = allocation_world()
    ledger.allocate(3, 4096.0)
    w.settle(w.net.now + 2 * w.nodes[3].params.heartbeat_period_ms)
    # domain peers of node 3: none; its own table reflects it immediately
    assert w.nodes[3].ait.get(3).storage_capacity_mb == 4096.0


# -- transfers -------------------------------------------------------------------


def transfer_world(inter_delay):
    inter = LinkConfig(delay_ms=inter_delay, drop_probability=0.0, bandwidth_mbps=100.0)
    w = World([(1, 1, 4096.0, 2800.0), (2, 2, 4096.0, 2800.0)], inter=inter)
    w.join_all()
    w.settle(500.0)
    return w


def test_transfer_100mb_at_100mbps():
    w = transfer_world(inter_delay=0.0)
    resp, thr = transfer_file(w.net, w.nodes[1].self_entry, 2, 100.0)
    assert resp.kind == KIND_TRANSFER_RESPONSE and resp.unit == "ms"
    assert thr.kind == KIND_THROUGHPUT and thr.unit == "Mbps"
    assert resp.value == pytest.approx(8388.608, abs=1e-9)
    # with zero delay the MB->bits factor cancels: exactly the link rate
    assert thr.value == pytest.approx(100.0, rel=1e-12)


def test_transfer_delay_is_additive():
    flat = transfer_file(transfer_world(0.0).net, entry(1, ip="10.0.1.2"), 2, 100.0)[0]
    delayed = transfer_file(transfer_world(50.0).net, entry(1, ip="10.0.1.2"), 2, 100.0)[0]
    assert delayed.value == pytest.approx(flat.value + 50.0, abs=1e-9)


def test_throughput_non_increasing_in_delay():
    values = []
    for delay in (0.0, 10.0, 50.0, 100.0, 500.0):
        w = transfer_world(delay)
        values.append(transfer_file(w.net, w.nodes[1].self_entry, 2, 10.0)[1].value)
    assert values == sorted(values, reverse=True)


def test_transfer_unknown_node():
    w = transfer_world(0.0)
    with pytest.raises(UnknownNode):
        transfer_file(w.net, w.nodes[1].self_entry, 99, 1.0)


def test_transfer_rides_the_trace():
    w = transfer_world(0.0)
    resp, _ = transfer_file(w.net, w.nodes[1].self_entry, 2, 1.0)
    sent_at = w.net.now
    w.settle(w.net.now + 100_000.0)
    data = w.delivers("DATA")
    assert len(data) == 1
    assert data[0].time_ms == pytest.approx(sent_at + resp.value, abs=1e-9)
