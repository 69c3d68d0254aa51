import functools
import itertools

import networkx as nx
import numpy as np
import pytest

from conftest import EXAMPLE, SMALL, random_sfm
from idnc.feedback import RecoveryState, StateFeedbackMatrix, apply_slot
from idnc.graph import build_graph, coded_packet
from idnc.ssp import (
    HyperrectangleViolation,
    InstanceTooLargeError,
    SspState,
    enumerate_actions,
    expected_cost,
    heuristic_policy,
    hyperrect_delta,
    maximal_cliques,
    monte_carlo_cost,
    optimal_policy,
    outcomes,
    realized_cost,
    transition,
    value_iteration,
)


def exact_values(sfm0, p):
    """Exact optimal cost-to-go by recursion on the SFM (entries only ever clear).

    Within one state, a self-loop of probability q under action a gives
    V = (c + sum_{s' != s} P V(s')) / (1 - q).  Actions come from networkx.
    """
    p = np.asarray(p, dtype=float)

    @functools.lru_cache(maxsize=None)
    def V(key):
        F = np.frombuffer(key, dtype=np.uint8).reshape(sfm0.m, sfm0.n)
        if not F.any():
            return 0.0
        sfm = StateFeedbackMatrix(F)
        g = build_graph(sfm)
        G = nx.Graph()
        G.add_nodes_from(range(len(g)))
        G.add_edges_from(zip(*np.nonzero(np.triu(g.adjacency))))
        wanting = [i for i in range(sfm.m) if F[i].any()]
        best = np.inf
        for c in nx.find_cliques(G):
            members = [(int(g.recv[u]), int(g.pkt[u])) for u in c]
            tgt = {i for i, _ in members}
            cost = sum(p[i] if i in tgt else 2 - p[i] for i in wanting)
            q_self, rest = 0.0, 0.0
            for bits in itertools.product([0, 1], repeat=len(members)):
                pr = 1.0
                F2 = F.copy()
                for (i, j), ok in zip(members, bits):
                    pr *= (1 - p[i]) if ok else p[i]
                    if ok:
                        F2[i, j] = 0
                if pr == 0:
                    continue
                if (F2 == F).all():
                    q_self += pr
                else:
                    rest += pr * V(F2.tobytes())
            best = min(best, (cost + rest) / (1 - q_self))
        return best

    return V


def test_small_action_sets(small_sfm):
    st = SspState.start(small_sfm)
    maximal = enumerate_actions(st)
    everything = enumerate_actions(st, maximal_only=False)
    assert len(everything) == 6
    both = [a for a in everything if a.targeted == {0, 1}]
    assert len(both) == 3
    assert {a.packet_set for a in maximal} == {a.packet_set for a in both}


def test_single_vertex_action():
    acts = enumerate_actions(SspState.start(StateFeedbackMatrix([[0, 1]])))
    assert len(acts) == 1 and len(acts[0]) == 1


def test_example_has_all_target_action(example_sfm):
    acts = enumerate_actions(SspState.start(example_sfm), size_cap=24)
    assert any(a.packet_set == {0, 1} and a.targeted == {0, 1, 2, 3} for a in acts)
    with pytest.raises(InstanceTooLargeError):
        enumerate_actions(SspState.start(example_sfm))


def test_maximal_cliques_match_networkx():
    rng = np.random.default_rng(7)
    for _ in range(60):
        sfm = random_sfm(rng, *rng.integers(1, 5, 2))
        g = build_graph(sfm)
        G = nx.Graph()
        G.add_nodes_from(range(len(g)))
        G.add_edges_from(zip(*np.nonzero(np.triu(g.adjacency))))
        ours = {frozenset(g.indices_of(c).tolist()) for c in maximal_cliques(g)}
        theirs = {frozenset(c) for c in nx.find_cliques(G)} if len(g) else set()
        assert ours == theirs


def test_transitions_erasure_free(small_sfm):
    st = SspState.start(small_sfm)
    a = enumerate_actions(st)[0]
    probs = [transition(st, a, o, 0.0)[1] for o in outcomes(st)]
    assert sorted(probs) == [0.0, 0.0, 0.0, 1.0]


def test_transitions_half(small_sfm):
    st = SspState.start(small_sfm)
    for a in enumerate_actions(st):
        probs = [transition(st, a, o, 0.5)[1] for o in outcomes(st)]
        assert probs == [0.25] * 4


def test_both_received_branch(small_sfm):
    st = SspState.start(small_sfm)
    a1 = enumerate_actions(st, maximal_only=False)[0]
    got = dict()
    for o in outcomes(st):
        got[tuple(o)] = transition(st, a1, o, 0.2)[1]
    assert got[(True, True)] == pytest.approx(0.64)
    assert sum(got.values()) == pytest.approx(1.0, abs=1e-12)


def test_costs(small_sfm):
    st = SspState.start(small_sfm)
    both = [a for a in enumerate_actions(st, maximal_only=False) if len(a.targeted) == 2]
    one = [a for a in enumerate_actions(st, maximal_only=False) if len(a.targeted) == 1]
    assert expected_cost(st, both[0], 0.0) == 0.0
    assert expected_cost(st, one[0], 0.0) == 2.0
    sfm = StateFeedbackMatrix([[1, 0], [0, 1], [1, 1]])
    st3 = SspState.start(sfm)
    act = coded_packet(sfm, {0})  # targets 0 and 2, receiver 1 gets a useless packet
    assert act.targeted == {0, 2}
    assert expected_cost(st3, act, 0.2) == pytest.approx(2.2)
    avg = sum(pr * realized_cost(st3, nxt) for nxt, pr in (transition(st3, act, o, 0.2) for o in outcomes(st3)))
    assert avg == pytest.approx(2.2, abs=1e-12)


def test_absorbing_start():
    vf = value_iteration(StateFeedbackMatrix.zeros(2, 2), 0.1)
    assert vf.value(StateFeedbackMatrix.zeros(2, 2)) == 0.0 and vf.policy == {}


def test_single_receiver_no_cost():
    sfm = StateFeedbackMatrix([[1, 1]])
    vf = value_iteration(sfm, 0.0)
    assert vf.value(sfm) == 0.0
    assert monte_carlo_cost(sfm, 0.0, optimal_policy(vf), 50, 0).mean == 0.0


def test_small_optimal_first_action(small_sfm):
    vf = value_iteration(small_sfm, [0.1, 0.1], maximal_only=False)
    assert vf.action(small_sfm).targeted == {0, 1}


@pytest.mark.parametrize("seed", range(6))
def test_value_iteration_matches_exact(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    n = int(rng.integers(1, 12 // m + 1))
    sfm = random_sfm(rng, m, n)
    p = rng.choice([0.0, 0.1, 0.3], size=m)
    vf = value_iteration(sfm, p)
    V = exact_values(sfm, p)
    for k, s in vf.sfms.items():
        assert vf.values[k] == pytest.approx(V(s.entries.tobytes()), abs=1e-8)


def test_mc_matches_value(small_sfm):
    p = np.array([0.3, 0.1])
    vf = value_iteration(small_sfm, p)
    est = monte_carlo_cost(small_sfm, p, optimal_policy(vf), 20_000, 1)
    assert abs(est.mean - vf.value(small_sfm)) < 3 * est.se + 1e-9


def test_heuristic_adapter(small_sfm):
    choose = heuristic_policy("min-dd", 0.1)
    assert choose(small_sfm, (0, 0)).targeted == {0, 1}


def test_hyperrect_deltas():
    sfm = StateFeedbackMatrix([[1, 0], [0, 1], [1, 1]])
    st = SspState.start(sfm)
    act = coded_packet(sfm, {0})
    nxt, _ = transition(st, act, [False, True, True], 0.5)
    d = hyperrect_delta(st, nxt, 0.5)
    assert d.tolist() == pytest.approx([0.0, 1.0, -2.0])
    bogus = SspState(sfm, (0, 0, 3))
    with pytest.raises(HyperrectangleViolation):
        hyperrect_delta(st, bogus, 0.5)
