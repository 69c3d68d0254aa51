"""Greedy maximum-weight vertex search and its two-layer variant."""
from __future__ import annotations

import numpy as np

from . import _kernels
from .feedback import RecoveryState
from .graph import Clique, IdncGraph
from .weights import Policy, receiver_factors


class EmptyGraphError(ValueError):
    """Selection was asked for a clique of an empty graph (block already complete)."""


def _greedy(graph: IdncGraph, a, b, cand) -> np.ndarray:
    av = np.ascontiguousarray(a[graph.recv], dtype=np.float64)
    bv = np.ascontiguousarray(b[graph.recv], dtype=np.float64)
    return _kernels.greedy_clique(graph.adjacency, av, bv, cand)


def mwvs_select(graph: IdncGraph, a, b) -> Clique:
    """Greedy clique over the whole graph using per-receiver factors (a, b).

    Each round reweights the vertices adjacent to everything chosen so far
    and adds the heaviest; ties go to the candidate with most candidate
    neighbours, then to the lowest (receiver, packet).  The result is a
    maximal clique.
    """
    if len(graph) == 0:
        raise EmptyGraphError("cannot select from an empty IDNC graph")
    cand = np.ones(len(graph), dtype=bool)
    return graph.clique_from_indices(_greedy(graph, a, b, cand))


def layered_select(graph: IdncGraph, good, a, b) -> Clique:
    """Two passes: a clique among good-channel receivers, then extend with bad ones.

    ``good`` is a per-receiver bool array (previous channel state Good).  If
    no good-channel receiver has a vertex the first layer is empty and the
    search runs on the bad layer alone.
    """
    if len(graph) == 0:
        raise EmptyGraphError("cannot select from an empty IDNC graph")
    good_v = np.asarray(good, dtype=bool)[graph.recv]
    first = _greedy(graph, a, b, good_v.copy())
    cand = ~good_v & graph.common_neighbor_mask(first)
    second = _greedy(graph, a, b, cand)
    return graph.clique_from_indices(np.concatenate([first, second]))


def select_for_policy(graph: IdncGraph, state: RecoveryState, policy: Policy, channel) -> Clique:
    """Pick the next transmission for ``policy`` given the sender's current view."""
    if policy.memory_aware is False and getattr(channel, "params", None) is not None:
        rprob = np.full(state.m, channel.params.p_good)
    else:
        rprob = channel.reception_probs()
    a, b = receiver_factors(policy, state.wants, state.delays, rprob)
    if policy.layered:
        if not getattr(channel, "has_memory", False):
            raise ValueError(f"{policy.name} needs a channel that reports previous states")
        return layered_select(graph, channel.prev_good(), a, b)
    return mwvs_select(graph, a, b)
