import random

import pytest

from conftest import World
from dssm.core import Ait, AitEntry
from dssm.election import (
    AdjacencyView,
    ElectionPolicy,
    EmptyDomain,
    select_agent,
)


def ait_from_powers(powers: dict) -> Ait:
    return Ait(
        AitEntry(nid, "10.1.1.1", 100.0, power) for nid, power in powers.items()
    )


def oracle_max_power(powers: dict, current: int) -> int:
    """Independent route: sort-based argmax with retention/lowest-id rules."""
    ranked = sorted(powers.items(), key=lambda kv: (-kv[1], kv[0]))
    top_power = ranked[0][1]
    argmax = [nid for nid, p in ranked if p == top_power]
    if current in argmax:
        return current
    return argmax[0]


def test_table2_powers_pick_the_xeon():
    ait = ait_from_powers({1: 2800.0, 2: 2660.0, 3: 2660.0})
    for current in (0, 1, 2, 3):
        assert select_agent(ait, current) == 1


def test_tie_keeps_incumbent():
    ait = ait_from_powers({1: 2800.0, 2: 2800.0})
    assert select_agent(ait, 2) == 2


def test_fresh_tie_breaks_by_lowest_id():
    ait = ait_from_powers({1: 2800.0, 2: 2800.0})
    assert select_agent(ait, 0) == 1
    # dead incumbent not in the table behaves like a fresh election
    assert select_agent(ait, 9) == 1


def test_single_node_domain():
    ait = ait_from_powers({7: 1000.0})
    assert select_agent(ait, 0) == 7


def test_empty_domain_raises():
    with pytest.raises(EmptyDomain):
        select_agent(Ait(), 0)


def test_lowest_id_policy():
    ait = ait_from_powers({5: 100.0, 2: 900.0, 9: 500.0})
    assert select_agent(ait, 9, ElectionPolicy.LOWEST_ID) == 2


def test_highest_connectivity_policy():
    ait = ait_from_powers({1: 100.0, 2: 100.0, 3: 100.0})
    adj = AdjacencyView({1: 2, 2: 5, 3: 5})
    assert select_agent(ait, 1, ElectionPolicy.HIGHEST_CONNECTIVITY, adj) == 2
    # unheard members count zero neighbours
    adj = AdjacencyView({3: 1})
    assert select_agent(ait, 1, ElectionPolicy.HIGHEST_CONNECTIVITY, adj) == 3


def test_oracle_sweep_1000_random_aits():
    rng = random.Random(20240817)
    power_pool = [2500.0, 2660.0, 2800.0, 3000.0, 3200.0]
    for _ in range(1000):
        size = rng.randint(1, 20)
        ids = rng.sample(range(1, 100), size)
        powers = {nid: rng.choice(power_pool) for nid in ids}
        current = rng.choice([0] + ids)
        ait = ait_from_powers(powers)
        got = select_agent(ait, current)
        assert got == oracle_max_power(powers, current)
        assert got in ait
        # tie-retention spelled out
        top = max(powers.values())
        if current in powers and powers[current] == top:
            assert got == current


def test_result_is_stable_under_repetition():
    rng = random.Random(7)
    for _ in range(50):
        powers = {nid: rng.choice([1.0, 2.0]) for nid in rng.sample(range(1, 30), 5)}
        current = rng.choice(sorted(powers))
        ait = ait_from_powers(powers)
        first = select_agent(ait, current)
        assert all(select_agent(ait, current) == first for _ in range(5))


def test_identical_views_agree():
    rng = random.Random(8)
    for _ in range(200):
        powers = {nid: rng.choice([2660.0, 2800.0]) for nid in rng.sample(range(1, 50), 6)}
        current = rng.choice([0] + sorted(powers))
        a = select_agent(ait_from_powers(powers), current)
        b = select_agent(ait_from_powers(powers), current)
        assert a == b


# -- integration with membership ------------------------------------------------


def test_stronger_joiner_takes_over_agency():
    w = World([(1, 1, 100.0, 2660.0), (2, 1, 100.0, 2660.0), (3, 1, 100.0, 2800.0)])
    w.join(1, at=0.0)
    w.join(2, at=100.0)
    w.settle(300.0)
    assert all(n.agent == 1 for n in w.members())
    w.join(3, at=300.0)
    w.settle(600.0)
    assert all(n.agent == 3 for n in w.members())
    assert 3 in w.net.virtual_members


def test_equal_power_joiner_leaves_agent_unchanged():
    w = World([(1, 1, 100.0, 2800.0), (2, 1, 100.0, 2800.0), (3, 1, 100.0, 2800.0)])
    w.join(1, at=0.0)
    w.join(2, at=100.0)
    w.settle(300.0)
    w.join(3, at=300.0)
    w.settle(600.0)
    assert all(n.agent == 1 for n in w.members())


def test_agent_crash_survivors_match_oracle():
    rng = random.Random(99)
    for trial in range(10):
        powers = {nid: rng.choice([2500.0, 2660.0, 2800.0]) for nid in (1, 2, 3, 4)}
        w = World([(nid, 1, 100.0, p) for nid, p in powers.items()], seed=trial)
        w.join_all()
        w.settle(1000.0)
        agent = w.nodes[1].agent
        assert agent == oracle_max_power(powers, 0)
        w.crash(agent, at=1000.0)
        w.settle(1000.0 + 200.0 + 600.0 + 50.0)  # period + timeout + slack
        survivors = {nid: p for nid, p in powers.items() if nid != agent}
        expected = oracle_max_power(survivors, 0)
        for node in w.members():
            assert node.agent == expected, f"trial {trial}"


def test_lowest_id_policy_end_to_end():
    w = World([(3, 1, 100.0, 2800.0), (5, 1, 100.0, 2900.0), (8, 1, 100.0, 3000.0)],
              policy=ElectionPolicy.LOWEST_ID)
    w.join_all()
    w.settle(1000.0)
    assert all(n.agent == 3 for n in w.members())  # power ignored
    assert w.registry.agent_of(1).node_id == 3


def test_highest_connectivity_policy_end_to_end():
    # full multicast domain: every live member ties on degree, lowest id wins
    w = World([(2, 1, 100.0, 2500.0), (4, 1, 100.0, 2900.0), (6, 1, 100.0, 2800.0)],
              policy=ElectionPolicy.HIGHEST_CONNECTIVITY)
    w.join_all()
    w.settle(2000.0)
    assert all(n.agent == 2 for n in w.members())
    assert w.registry.agent_of(1).node_id == 2
    assert 2 in w.net.virtual_members


def test_announcement_matches_local_computation():
    # Members never disagree with what the announcing agent claims.
    w = World([(1, 1, 100.0, 2800.0), (2, 1, 100.0, 2660.0), (3, 1, 100.0, 2800.0)])
    w.join_all()
    w.settle(1000.0)
    announcers = {r.src for r in w.sends("AGENT_ANNOUNCE")}
    final_agent = {n.agent for n in w.members()}
    assert final_agent == {1}
    assert str(1) in announcers
