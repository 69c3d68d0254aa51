"""Exact stochastic-shortest-path model of the recovery phase, for tiny blocks.

States are (SFM, delay vector).  Costs and SFM transitions never depend on
the delay vector, so the optimal cost-to-go is a function of the SFM alone;
value iteration therefore runs over SFMs reachable from the start state.
Delays are still carried in ``SspState`` for cost bookkeeping and for
heuristics whose choices read them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .channels import MemorylessChannel, clamp_erasure
from .feedback import RecoveryState, StateFeedbackMatrix, apply_slot
from .graph import Clique, IdncGraph, build_graph, coded_packet
from .selection import select_for_policy
from .weights import Policy

DEFAULT_SIZE_CAP = 12


class InstanceTooLargeError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class HyperrectangleViolation(AssertionError):
    """A one-slot change of the channel-weighted state value left {-1/r, 0, 1}."""


@dataclass(frozen=True)
class SspState:
    sfm: StateFeedbackMatrix
    delays: tuple[int, ...]

    @classmethod
    def start(cls, sfm) -> SspState:
        sfm = sfm if isinstance(sfm, StateFeedbackMatrix) else StateFeedbackMatrix(sfm)
        return cls(sfm, (0,) * sfm.m)

    @property
    def m(self) -> int:
        return self.sfm.m

    @property
    def wants(self) -> np.ndarray:
        return self.sfm.wants_sizes()

    @property
    def wanting(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.wants).tolist())

    @property
    def absorbing(self) -> bool:
        return self.sfm.is_empty()

    def state_values(self) -> np.ndarray:
        """U_i = W_i + D_i."""
        return self.wants + np.asarray(self.delays)

    def channel_weighted_values(self, p) -> np.ndarray:
        p = clamp_erasure(np.broadcast_to(p, (self.m,)))
        return self.wants / (1.0 - p) + np.asarray(self.delays)

    def key(self) -> bytes:
        return self.sfm.key()

    def as_recovery(self) -> RecoveryState:
        st = RecoveryState.start(self.sfm)
        st.delays = np.asarray(self.delays, dtype=np.int64).copy()
        return st


def _check_size(sfm: StateFeedbackMatrix, cap: int):
    if sfm.m * sfm.n > cap:
        raise InstanceTooLargeError(
            f"SSP oracle limited to M*N <= {cap}, got M={sfm.m}, N={sfm.n}; raise size_cap to override"
        )


def _bron_kerbosch(nbrs, r, p, x, out):
    if not p and not x:
        out.append(r)
        return
    pivot = max(p | x, key=lambda u: (len(p & nbrs[u]), -u))
    for v in sorted(p - nbrs[pivot]):
        _bron_kerbosch(nbrs, r | {v}, p & nbrs[v], x & nbrs[v], out)
        p = p - {v}
        x = x | {v}


def maximal_cliques(graph: IdncGraph) -> list[Clique]:
    """All maximal cliques, Bron-Kerbosch with pivoting, sorted by member indices."""
    if len(graph) == 0:
        return []
    nbrs = [frozenset(np.flatnonzero(row).tolist()) for row in graph.adjacency]
    out: list[set] = []
    _bron_kerbosch(nbrs, frozenset(), frozenset(range(len(graph))), frozenset(), out)
    return [graph.clique_from_indices(sorted(c)) for c in sorted(out, key=lambda c: sorted(c))]


def all_cliques(graph: IdncGraph) -> list[Clique]:
    nbrs = [frozenset(np.flatnonzero(row).tolist()) for row in graph.adjacency]
    out = []

    def grow(current, cand):
        for v in sorted(cand):
            nxt = current + (v,)
            out.append(nxt)
            grow(nxt, {u for u in cand if u > v} & nbrs[v])

    grow((), set(range(len(graph))))
    return [graph.clique_from_indices(c) for c in out]


def enumerate_actions(state: SspState, size_cap: int = DEFAULT_SIZE_CAP, maximal_only: bool = True):
    """The action set of a non-absorbing state.

    With ``maximal_only`` (the default) these are the maximal cliques of the
    state's IDNC graph.  Otherwise every distinct coded packet that some
    clique produces, each represented by all receivers that decode it.
    """
    _check_size(state.sfm, size_cap)
    if state.absorbing:
        raise ValueError("absorbing state has no actions")
    graph = build_graph(state.sfm)
    if maximal_only:
        return maximal_cliques(graph)
    seen = {}
    for c in all_cliques(graph):
        seen.setdefault(c.packet_set, None)
    acts = [coded_packet(state.sfm, ps) for ps in seen]
    return sorted(acts, key=lambda a: (len(a.packet_set), sorted(a.packet_set)))


def outcomes(state: SspState):
    """Every received/erased pattern over the wanting receivers (others fixed True)."""
    idx = sorted(state.wanting)
    for bits in itertools.product((True, False), repeat=len(idx)):
        rec = np.ones(state.m, dtype=bool)
        rec[idx] = bits
        yield rec


def transition(state: SspState, action, outcome, p) -> tuple[SspState, float]:
    p = clamp_erasure(np.broadcast_to(p, (state.m,)))
    rec = np.asarray(outcome, dtype=bool)
    nxt, _ = apply_slot(state.as_recovery(), action, rec)
    prob = 1.0
    for i in state.wanting:
        prob *= (1.0 - p[i]) if rec[i] else p[i]
    return SspState(nxt.sfm, tuple(int(d) for d in nxt.delays)), prob


def expected_cost(state: SspState, action, p) -> float:
    """sum_{targeted} p_i + sum_{wanting, untargeted} (2 - p_i)."""
    p = clamp_erasure(np.broadcast_to(p, (state.m,)))
    targeted = action.targeted
    return float(sum(p[i] if i in targeted else 2.0 - p[i] for i in state.wanting))


def realized_cost(state: SspState, nxt: SspState) -> int:
    """sum over wanting receivers of 1 + (U_i' - U_i)."""
    du = nxt.state_values() - state.state_values()
    return int(sum(1 + du[i] for i in state.wanting))


def hyperrect_delta(state: SspState, nxt: SspState, p, atol: float = 1e-9) -> np.ndarray:
    """Per-receiver change of W/(1-p) + D over one slot, checked against {-1/(1-p), 0, 1}."""
    p = clamp_erasure(np.broadcast_to(p, (state.m,)))
    delta = nxt.channel_weighted_values(p) - state.channel_weighted_values(p)
    for i, d in enumerate(delta):
        allowed = (-1.0 / (1.0 - p[i]), 0.0, 1.0)
        if not any(abs(d - a) <= atol * max(1.0, abs(a)) for a in allowed):
            raise HyperrectangleViolation(f"receiver {i}: delta {d} not in {allowed}")
    return delta


@dataclass
class _Edge:
    cost: float
    succ: list  # (key, prob) pairs excluding the self-loop
    p_self: float


@dataclass
class ValueFunction:
    values: dict[bytes, float]
    policy: dict[bytes, object]
    sfms: dict[bytes, StateFeedbackMatrix] = field(default_factory=dict)
    iterations: int = 0

    def value(self, state) -> float:
        return self.values[_key(state)]

    def action(self, state):
        return self.policy[_key(state)]

    def table_text(self) -> str:
        """``sfm-rows  V  packets`` per state, most-wanting states first (1-based packets)."""
        rows = []
        keys = sorted(self.sfms, key=lambda k: (-int(self.sfms[k].entries.sum()), k))
        for k in keys:
            sfm = self.sfms[k]
            fm = "/".join("".join(str(x) for x in r) for r in sfm.entries)
            act = self.policy.get(k)
            ps = "-" if act is None else "+".join(str(j + 1) for j in sorted(act.packet_set))
            rows.append(f"{fm}\t{self.values[k]:.6f}\t{ps}")
        return "state\tvalue\taction\n" + "\n".join(rows) + "\n"


def _key(state) -> bytes:
    if isinstance(state, SspState):
        return state.key()
    if isinstance(state, StateFeedbackMatrix):
        return state.key()
    return StateFeedbackMatrix(state).key()


def _aggregated(sfm: StateFeedbackMatrix, action, p):
    """SFM successors of ``action``: only targeted receptions change the SFM."""
    targ = sorted(action.members)
    out = {}
    for bits in itertools.product((True, False), repeat=len(targ)):
        F = sfm.entries.copy()
        prob = 1.0
        for v, ok in zip(targ, bits):
            if ok:
                F[v.receiver, v.packet] = 0
                prob *= 1.0 - p[v.receiver]
            else:
                prob *= p[v.receiver]
        if prob == 0.0:
            continue
        k = F.tobytes()
        if k in out:
            out[k] = (out[k][0], out[k][1] + prob)
        else:
            out[k] = (F, prob)
    return out


def value_iteration(
    start,
    p,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    size_cap: int = DEFAULT_SIZE_CAP,
    maximal_only: bool = True,
) -> ValueFunction:
    """Optimal expected total cost from every SFM reachable from ``start``.

    Gauss-Seidel sweeps in order of increasing number of wanted entries.
    The greedy policy picks the first action (in ``enumerate_actions`` order)
    whose Q-value is within 1e-12 of the minimum.
    """
    start = start if isinstance(start, SspState) else SspState.start(start)
    sfm0 = start.sfm
    _check_size(sfm0, size_cap)
    m = sfm0.m
    p = clamp_erasure(np.broadcast_to(p, (m,)))
    if np.any(p >= 1.0):
        raise ValueError("every reception probability must be positive")

    sfms = {sfm0.key(): sfm0}
    actions: dict[bytes, list] = {}
    edges: dict[bytes, list[_Edge]] = {}
    frontier = [sfm0.key()]
    while frontier:
        k = frontier.pop()
        sfm = sfms[k]
        if sfm.is_empty():
            continue
        st = SspState.start(sfm)
        acts = enumerate_actions(st, size_cap, maximal_only)
        actions[k] = acts
        edges[k] = []
        for a in acts:
            succ = _aggregated(sfm, a, p)
            p_self = 0.0
            rest = []
            for k2, (F2, prob) in succ.items():
                if k2 == k:
                    p_self += prob
                    continue
                rest.append((k2, prob))
                if k2 not in sfms:
                    sfms[k2] = StateFeedbackMatrix(F2)
                    frontier.append(k2)
            edges[k].append(_Edge(expected_cost(st, a, p), rest, p_self))

    V = {k: 0.0 for k in sfms}
    order = sorted(edges, key=lambda k: int(sfms[k].entries.sum()))
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise ConvergenceError(
                f"value iteration did not reach tol={tol} within {max_iter} sweeps (p={p.tolist()}, M={m}, N={sfm0.n})"
            )
        diff = 0.0
        for k in order:
            best = min(e.cost + e.p_self * V[k] + sum(q * V[k2] for k2, q in e.succ) for e in edges[k])
            diff = max(diff, abs(best - V[k]))
            V[k] = best
        if diff < tol:
            break

    policy = {}
    for k in order:
        q = [e.cost + e.p_self * V[k] + sum(pr * V[k2] for k2, pr in e.succ) for e in edges[k]]
        lo = min(q)
        policy[k] = actions[k][next(i for i, x in enumerate(q) if x <= lo + 1e-12)]
    return ValueFunction(V, policy, sfms, it)


def heuristic_policy(policy: Policy, p):
    """Adapter: (sfm, delays) -> clique chosen by a greedy scheme on a memoryless channel."""
    policy = Policy.parse(policy) if isinstance(policy, str) else policy

    def choose(sfm: StateFeedbackMatrix, delays):
        ch = MemorylessChannel(sfm.m, p=p)
        st = RecoveryState.start(sfm)
        st.delays = np.asarray(delays, dtype=np.int64)
        return select_for_policy(build_graph(sfm), st, policy, ch)

    return choose


def optimal_policy(vf: ValueFunction):
    def choose(sfm, delays):
        return vf.policy[sfm.key()]

    return choose


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    se: float
    episodes: int


def monte_carlo_cost(start, p, choose, episodes: int = 10_000, rng=None) -> CostEstimate:
    """Mean total SSP cost of a policy, simulated for many episodes at once.

    ``choose(sfm, delays)`` returns the action; choices are cached per
    distinct (SFM, delays) so the policy runs once per visited state.
    """
    start = start if isinstance(start, SspState) else SspState.start(start)
    rng = np.random.default_rng(rng)
    F0 = start.sfm.entries
    m, n = F0.shape
    p = clamp_erasure(np.broadcast_to(p, (m,)))
    F = np.repeat(F0[None].astype(np.int64), episodes, axis=0)
    D = np.zeros((episodes, m), dtype=np.int64)
    cost = np.zeros(episodes, dtype=np.int64)
    cache: dict[bytes, np.ndarray] = {}

    active = np.flatnonzero(F.any(axis=(1, 2)))
    while active.size:
        rows = np.concatenate([F[active].reshape(active.size, m * n), D[active]], axis=1)
        uniq, inv = np.unique(rows, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        targ_u = np.empty((uniq.shape[0], m), dtype=np.int64)
        for u, row in enumerate(uniq):
            key = row.tobytes()
            t = cache.get(key)
            if t is None:
                sfm = StateFeedbackMatrix(row[: m * n].reshape(m, n))
                act = choose(sfm, tuple(int(x) for x in row[m * n:]))
                t = np.full(m, -1, dtype=np.int64)
                for v in act.members:
                    t[v.receiver] = v.packet
                cache[key] = t
            targ_u[u] = t
        t = targ_u[inv]
        Fa = F[active]
        wanting = Fa.any(axis=2)
        rec = rng.random((active.size, m)) >= p
        decode = wanting & rec & (t >= 0)
        useless = wanting & rec & (t < 0)
        lost = wanting & ~rec
        cost[active] += 2 * useless.sum(axis=1) + lost.sum(axis=1)
        D[active] += useless
        e_i, r_i = np.nonzero(decode)
        F[active[e_i], r_i, t[e_i, r_i]] = 0
        active = active[F[active].any(axis=(1, 2))]

    se = float(cost.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else 0.0
    return CostEstimate(float(cost.mean()), se, episodes)
