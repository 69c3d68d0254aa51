"""Vertex weights for the greedy clique search.

Every policy weighs vertex v_ij as ``a_i * sum_{v_kl ~ v_ij} b_k`` for some
per-receiver factors a, b:

=========  ===============  ===============
policy     a_i              b_k
=========  ===============  ===============
min-oct    tau_i            tau_k
min-dd     r_i              r_k
mwvs       Ut_i ** 2        Ut_k ** 2
=========  ===============  ===============

with r_i the reception probability (1 - p_i, or Pr(C_i -> G) on a channel with
memory), tau_i = W_i / r_i the expected individual completion time, and
Ut_i = 2 * (lam * W_i / r_i + (1 - lam) * D_i) the channel-weighted state value.
The factor 2 makes lam = 0.5 give W_i / r_i + D_i exactly; it is a positive
rescaling and never changes an argmax.

The scalar functions take ``ReceiverState`` snapshots and evaluate the
formulas over the full graph.  ``receiver_factors`` is the vectorised form
the selection kernels consume.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import GOOD, PROB_FLOOR, GecParams
from .feedback import ReceiverState
from .graph import IdncGraph, Vertex

KINDS = ("min-oct", "min-dd", "mwvs")
DEFAULT_LAMBDA = 0.5


@dataclass(frozen=True)
class Policy:
    """A packet-selection scheme: weight kind, lambda (mwvs only), layering.

    ``memory_aware=None`` means: use Pr(C_i -> G) whenever the channel has
    memory, 1 - p_i otherwise.
    """

    kind: str
    lam: float = DEFAULT_LAMBDA
    layered: bool = False
    memory_aware: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")

    @property
    def name(self) -> str:
        s = self.kind
        if self.kind == "mwvs" and self.lam != DEFAULT_LAMBDA:
            s += f"@{self.lam:g}"
        if self.layered:
            s += "-layered"
        return s

    @classmethod
    def parse(cls, text: str) -> Policy:
        """``min-oct``, ``min-dd-layered``, ``mwvs@0.25``, ``mwvs@1-layered`` ..."""
        s = text.strip().lower()
        layered = s.endswith("-layered")
        if layered:
            s = s[: -len("-layered")]
        lam = DEFAULT_LAMBDA
        if "@" in s:
            s, lam_s = s.split("@", 1)
            try:
                lam = float(lam_s)
            except ValueError:
                raise ValueError(f"bad lambda in policy {text!r}") from None
            if s != "mwvs":
                raise ValueError(f"only mwvs takes a lambda, got {text!r}")
        return cls(s, lam, layered)

    def __str__(self):
        return self.name


def _r(receiver: ReceiverState, memory_aware: bool, channel) -> float:
    return reception_probability(receiver, memory_aware, channel)


def reception_probability(receiver: ReceiverState, memory_aware: bool = False, channel=None) -> float:
    """1 - p_i, or Pr(C_i -> G) when memory aware; floored at PROB_FLOOR."""
    if memory_aware:
        params = channel if isinstance(channel, GecParams) else channel.params
        state = receiver.prev_channel_state or GOOD
        r = params.to_good(state)
    else:
        r = 1.0 - receiver.erasure_prob
    return max(r, PROB_FLOOR)


def expected_ict(receiver: ReceiverState, memory_aware: bool = False, channel=None) -> float:
    return receiver.wants_size / _r(receiver, memory_aware, channel)


def state_value(receiver: ReceiverState, lam: float = DEFAULT_LAMBDA, scaled: bool = True) -> float:
    """lam*W + (1-lam)*D, doubled unless ``scaled=False``."""
    u = lam * receiver.wants_size + (1.0 - lam) * receiver.accum_delay
    return 2.0 * u if scaled else u


def channel_weighted_value(
    receiver: ReceiverState, lam: float = DEFAULT_LAMBDA, memory_aware: bool = False, channel=None,
    scaled: bool = True,
) -> float:
    wt = receiver.wants_size / _r(receiver, memory_aware, channel)
    u = lam * wt + (1.0 - lam) * receiver.accum_delay
    return 2.0 * u if scaled else u


def _neighbour_sum(graph: IdncGraph, vertex: Vertex, value_of) -> float:
    row = graph.adjacency[graph.index_of(vertex)]
    return float(sum(value_of(int(graph.recv[k])) for k in np.flatnonzero(row)))


def weight_min_oct(graph, vertex, receivers, memory_aware=False, channel=None) -> float:
    tau = [expected_ict(r, memory_aware, channel) for r in receivers]
    return tau[vertex.receiver] * _neighbour_sum(graph, vertex, tau.__getitem__)


def weight_min_dd(graph, vertex, receivers, memory_aware=False, channel=None) -> float:
    r = [_r(x, memory_aware, channel) for x in receivers]
    return r[vertex.receiver] * _neighbour_sum(graph, vertex, r.__getitem__)


def weight_mwvs(graph, vertex, receivers, lam=DEFAULT_LAMBDA, memory_aware=False, channel=None) -> float:
    u2 = [channel_weighted_value(r, lam, memory_aware, channel) ** 2 for r in receivers]
    return u2[vertex.receiver] * _neighbour_sum(graph, vertex, u2.__getitem__)


def receiver_factors(policy: Policy, wants, delays, rprob) -> tuple[np.ndarray, np.ndarray]:
    """Per-receiver (a, b) factors; see the module table."""
    wants = np.asarray(wants, dtype=np.float64)
    r = np.maximum(np.asarray(rprob, dtype=np.float64), PROB_FLOOR)
    if policy.kind == "min-oct":
        tau = wants / r
        return tau, tau
    if policy.kind == "min-dd":
        return r, r
    u = 2.0 * (policy.lam * wants / r + (1.0 - policy.lam) * np.asarray(delays, dtype=np.float64))
    u2 = u * u
    return u2, u2


@dataclass
class VertexWeightTable:
    weights: dict[Vertex, float]
    a: np.ndarray  # per-receiver own factor
    b: np.ndarray  # per-receiver neighbour factor
    degree: dict[Vertex, float] = field(default_factory=dict)  # Delta_ij / Theta_ij


def weight_table(graph: IdncGraph, policy: Policy, wants, delays, rprob) -> VertexWeightTable:
    """Full-graph weights of every vertex (the first round of the greedy search)."""
    a, b = receiver_factors(policy, wants, delays, rprob)
    deg = graph.adjacency.astype(np.float64) @ b[graph.recv]
    w = a[graph.recv] * deg
    vs = graph.vertices
    return VertexWeightTable(
        weights={v: float(x) for v, x in zip(vs, w)},
        a=a,
        b=b,
        degree={v: float(x) for v, x in zip(vs, deg)},
    )
