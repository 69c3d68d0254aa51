"""Receiver-side bookkeeping: the state feedback matrix and per-slot updates.

Indices are 0-based throughout: receiver ``i`` in ``range(m)``, packet ``j``
in ``range(n)``.  SFM entries are 1 where the packet is still wanted.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


class StaleActionError(ValueError):
    """A clique references a (receiver, packet) pair that is no longer wanted."""


class IncompleteBlockError(RuntimeError):
    pass


class Classification(str, Enum):
    INSTANTLY_DECODABLE = "instantly-decodable"
    NON_INNOVATIVE = "non-innovative"
    NON_INSTANTLY_DECODABLE = "non-instantly-decodable"
    NOT_RECEIVED = "not-received"


class StateFeedbackMatrix:
    """Binary M x N matrix, row i = receiver i, 1 = packet wanted."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        raw = np.array(entries, ndmin=2)
        if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
            raise ValueError(f"SFM needs shape (m>=1, n>=1), got {raw.shape}")
        if not ((raw == 0) | (raw == 1)).all():
            raise ValueError("SFM entries must be 0 or 1")
        self.entries = raw.astype(np.uint8)

    @classmethod
    def zeros(cls, m: int, n: int) -> StateFeedbackMatrix:
        return cls(np.zeros((m, n), dtype=np.uint8))

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def wants(self, i: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.entries[i]).tolist())

    def has(self, i: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.entries[i] == 0).tolist())

    def wants_sizes(self) -> np.ndarray:
        return self.entries.sum(axis=1, dtype=np.int64)

    def is_empty(self) -> bool:
        return not self.entries.any()

    def copy(self) -> StateFeedbackMatrix:
        new = object.__new__(StateFeedbackMatrix)
        new.entries = self.entries.copy()
        return new

    def key(self) -> bytes:
        return self.entries.tobytes()

    def __eq__(self, other):
        if not isinstance(other, StateFeedbackMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and bool(np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash((self.entries.shape, self.key()))

    def __repr__(self):
        rows = "; ".join("".join(str(x) for x in row) for row in self.entries)
        return f"StateFeedbackMatrix({rows})"

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.entries.tolist())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> StateFeedbackMatrix:
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        try:
            data = [[int(x) for x in r] for r in rows]
        except ValueError as exc:
            raise ValueError(f"SFM CSV must contain only 0/1 integers: {exc}") from None
        if len({len(r) for r in data}) != 1:
            raise ValueError("SFM CSV rows have unequal lengths")
        return cls(data)


@dataclass(frozen=True)
class ReceiverState:
    """Snapshot of everything the weight formulas read for one receiver."""

    receiver_id: int
    erasure_prob: float
    wants_size: int
    initial_wants_size: int = 0
    accum_delay: int = 0
    erased_slots: int = 0
    prev_channel_state: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.erasure_prob < 1.0:
            raise ValueError(f"erasure_prob must be in [0, 1), got {self.erasure_prob}")


@dataclass(frozen=True)
class SlotOutcome:
    received: tuple[bool, ...]
    classification: tuple[Classification, ...]


@dataclass
class RecoveryState:
    """Sender-side view of a block during the recovery phase.

    ``ict[i]`` is -1 until receiver i's Wants set empties, then the recovery
    slot index (1-based) at which it did; receivers that start with nothing
    to recover have ``ict = 0``.
    """

    sfm: StateFeedbackMatrix
    initial_wants: np.ndarray
    delays: np.ndarray
    erased: np.ndarray
    ict: np.ndarray
    slot: int = 0
    schedule: list = field(default_factory=list)

    @classmethod
    def start(cls, sfm: StateFeedbackMatrix) -> RecoveryState:
        w = sfm.wants_sizes()
        m = sfm.m
        return cls(
            sfm=sfm.copy(),
            initial_wants=w.copy(),
            delays=np.zeros(m, dtype=np.int64),
            erased=np.zeros(m, dtype=np.int64),
            ict=np.where(w == 0, 0, -1).astype(np.int64),
        )

    @property
    def m(self) -> int:
        return self.sfm.m

    @property
    def wants(self) -> np.ndarray:
        return self.sfm.wants_sizes()

    def complete(self) -> bool:
        return self.sfm.is_empty()

    def copy(self) -> RecoveryState:
        return replace(
            self,
            sfm=self.sfm.copy(),
            initial_wants=self.initial_wants.copy(),
            delays=self.delays.copy(),
            erased=self.erased.copy(),
            ict=self.ict.copy(),
            schedule=list(self.schedule),
        )

    def receiver_states(self, channel=None) -> list[ReceiverState]:
        w = self.wants
        if channel is None:
            p = np.zeros(self.m)
        elif getattr(channel, "params", None) is not None:
            p = np.full(self.m, channel.params.p_bad)
        else:
            p = 1.0 - channel.reception_probs()
        prev = None
        if channel is not None and getattr(channel, "has_memory", False):
            prev = ["G" if x else "B" for x in channel.prev_good()]
        return [
            ReceiverState(
                receiver_id=i,
                erasure_prob=float(min(p[i], 0.999)),
                wants_size=int(w[i]),
                initial_wants_size=int(self.initial_wants[i]),
                accum_delay=int(self.delays[i]),
                erased_slots=int(self.erased[i]),
                prev_channel_state=None if prev is None else prev[i],
            )
            for i in range(self.m)
        ]


def run_initial_phase(n: int, channel, rng=None) -> StateFeedbackMatrix:
    """Broadcast packets 0..n-1 uncoded once; f_ij = 1 where j was erased at i."""
    if n < 1:
        raise ValueError("need at least one packet")
    if channel.m < 1:
        raise ValueError("need at least one receiver")
    if rng is not None:
        channel.reset(rng)
    entries = np.empty((channel.m, n), dtype=np.uint8)
    for j in range(n):
        entries[:, j] = ~channel.step()
    return StateFeedbackMatrix(entries)


def classify_packet(packet_set, receiver: int, sfm: StateFeedbackMatrix) -> Classification:
    """How a coded packet (XOR of ``packet_set``) looks to one receiver."""
    packets = getattr(packet_set, "packet_set", packet_set)
    if not packets:
        raise ValueError("empty coded packet")
    hits = sum(int(sfm.entries[receiver, j]) for j in packets)
    if hits == 0:
        return Classification.NON_INNOVATIVE
    if hits == 1:
        return Classification.INSTANTLY_DECODABLE
    return Classification.NON_INSTANTLY_DECODABLE


def apply_slot(state: RecoveryState, clique, receptions) -> tuple[RecoveryState, SlotOutcome]:
    """Apply one recovery transmission and its feedback; returns a new state.

    Receivers with an empty Wants set are frozen.  A receiver that gets the
    packet either decodes its single wanted packet or accrues one unit of
    decoding delay; an erasure only bumps ``erased``.
    """
    F = state.sfm.entries
    m, n = F.shape
    rec = np.asarray(receptions, dtype=bool)
    if rec.shape != (m,):
        raise ValueError(f"need {m} reception flags, got shape {rec.shape}")
    for v in clique.members:
        if not (0 <= v.receiver < m and 0 <= v.packet < n) or F[v.receiver, v.packet] != 1:
            raise StaleActionError(f"vertex {v} is not in the current SFM")

    pset = np.zeros(n, dtype=bool)
    pset[list(clique.packet_set)] = True
    hit = F[:, pset].astype(bool)
    counts = hit.sum(axis=1)
    wanting = F.any(axis=1)
    decode = wanting & rec & (counts == 1)
    useless = wanting & rec & (counts != 1)
    lost = wanting & ~rec

    new = state.copy()
    NF = new.sfm.entries
    cols = np.flatnonzero(pset)
    for i in np.flatnonzero(decode):
        NF[i, cols[np.argmax(hit[i])]] = 0
    new.delays += useless
    new.erased += lost
    new.slot = state.slot + 1
    done = decode & ~NF.any(axis=1)
    new.ict[done] = new.slot
    new.schedule.append(frozenset(clique.packet_set))

    cls = []
    for i in range(m):
        if not rec[i]:
            cls.append(Classification.NOT_RECEIVED)
        elif counts[i] == 0:
            cls.append(Classification.NON_INNOVATIVE)
        elif counts[i] == 1:
            cls.append(Classification.INSTANTLY_DECODABLE)
        else:
            cls.append(Classification.NON_INSTANTLY_DECODABLE)
    return new, SlotOutcome(tuple(bool(x) for x in rec), tuple(cls))


def compute_ict_oct(state: RecoveryState) -> tuple[np.ndarray, int]:
    """Individual completion times and their max, for a finished block."""
    if not state.complete():
        raise IncompleteBlockError(f"block not complete after {state.slot} slots: wants={state.wants.tolist()}")
    ict = state.ict.copy()
    return ict, int(ict.max())


def ict_identity_residual(state: RecoveryState) -> np.ndarray:
    """T_i - (W_i^s + D_i + erased_i); all zeros for a correctly tracked block."""
    ict, _ = compute_ict_oct(state)
    return ict - (state.initial_wants + state.delays + state.erased)
