"""IDNC graph: one vertex per wanted (receiver, packet), edges under C1/C2.

Two vertices v_ij, v_kl are adjacent when they want the same packet (C1) or
when each wanted packet is already held by the other receiver (C2).  Any
clique XORs into a packet that every member receiver decodes on arrival.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .feedback import StateFeedbackMatrix


@dataclass(frozen=True, order=True)
class Vertex:
    receiver: int
    packet: int

    def __repr__(self):
        return f"v({self.receiver},{self.packet})"


@dataclass(frozen=True)
class Clique:
    members: tuple[Vertex, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(sorted(set(self.members))))

    @property
    def packet_set(self) -> frozenset[int]:
        return frozenset(v.packet for v in self.members)

    @property
    def targeted(self) -> frozenset[int]:
        return frozenset(v.receiver for v in self.members)

    def __len__(self):
        return len(self.members)

    def __bool__(self):
        return bool(self.members)

    def __iter__(self):
        return iter(self.members)


class IdncGraph:
    """Immutable IDNC graph built from an SFM.

    Vertices are ordered lexicographically by (receiver, packet); index k in
    every array below refers to that order.
    """

    def __init__(self, sfm: StateFeedbackMatrix):
        self.source_sfm = sfm
        recv, pkt = np.nonzero(sfm.entries)
        self.recv = recv.astype(np.int64)
        self.pkt = pkt.astype(np.int64)
        self.adjacency = _kernels.build_adjacency(sfm.entries, self.recv, self.pkt)
        self.adjacency.setflags(write=False)

    def __len__(self):
        return self.recv.shape[0]

    @cached_property
    def vertices(self) -> tuple[Vertex, ...]:
        return tuple(Vertex(int(i), int(j)) for i, j in zip(self.recv, self.pkt))

    @cached_property
    def _index(self) -> dict[Vertex, int]:
        return {v: k for k, v in enumerate(self.vertices)}

    def index_of(self, v: Vertex) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise KeyError(f"{v} is not a vertex of this graph") from None

    def adjacent(self, u: Vertex, v: Vertex) -> bool:
        return bool(self.adjacency[self.index_of(u), self.index_of(v)])

    def neighbors(self, v: Vertex) -> frozenset[Vertex]:
        row = self.adjacency[self.index_of(v)]
        return frozenset(self.vertices[k] for k in np.flatnonzero(row))

    def edges(self) -> list[tuple[Vertex, Vertex]]:
        s, t = np.nonzero(np.triu(self.adjacency))
        return [(self.vertices[a], self.vertices[b]) for a, b in zip(s, t)]

    def clique_from_indices(self, idx) -> Clique:
        return Clique(tuple(self.vertices[int(k)] for k in idx))

    def indices_of(self, clique: Clique) -> np.ndarray:
        return np.array([self.index_of(v) for v in clique.members], dtype=np.int64)

    def common_neighbor_mask(self, idx) -> np.ndarray:
        mask = np.ones(len(self), dtype=bool)
        for k in idx:
            mask &= self.adjacency[k]
        return mask

    def edge_list_text(self) -> str:
        """One ``i j -- k l`` line per edge, 0-based, vertices in graph order."""
        lines = [f"{u.receiver} {u.packet} -- {v.receiver} {v.packet}" for u, v in self.edges()]
        return "\n".join(lines) + ("\n" if lines else "")


def build_graph(sfm: StateFeedbackMatrix) -> IdncGraph:
    return IdncGraph(sfm)


def neighbors_of_all(graph: IdncGraph, clique: Clique) -> frozenset[Vertex]:
    """Vertices outside ``clique`` adjacent to every member (all vertices if empty)."""
    mask = graph.common_neighbor_mask(graph.indices_of(clique))
    return frozenset(graph.vertices[k] for k in np.flatnonzero(mask))


def is_clique(graph: IdncGraph, clique: Clique) -> bool:
    idx = graph.indices_of(clique)
    sub = graph.adjacency[np.ix_(idx, idx)]
    return bool((sub | np.eye(len(idx), dtype=bool)).all())


def is_maximal(graph: IdncGraph, clique: Clique) -> bool:
    return not neighbors_of_all(graph, clique)


@dataclass(frozen=True)
class CodedPacket:
    """XOR of ``packet_set`` plus the vertices that decode it instantly.

    Unlike a clique, the packet set may contain packets no member decodes;
    schedules written as packet combinations replay through this.
    """

    members: tuple[Vertex, ...]
    packet_set: frozenset[int]

    @property
    def targeted(self) -> frozenset[int]:
        return frozenset(v.receiver for v in self.members)


def coded_packet(sfm: StateFeedbackMatrix, packets) -> CodedPacket:
    """Members are v_ij for every receiver i wanting exactly one packet j of the set."""
    packets = frozenset(int(j) for j in packets)
    if not packets:
        raise ValueError("empty coded packet")
    F = sfm.entries
    members = []
    for i in range(sfm.m):
        hits = [j for j in sorted(packets) if F[i, j]]
        if len(hits) == 1:
            members.append(Vertex(i, hits[0]))
    return CodedPacket(tuple(members), packets)
