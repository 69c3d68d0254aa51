"""Broadcast erasure channels: memoryless Bernoulli, Gilbert-Elliott, scripted.

All channels share one small surface used by the simulator and the weights:

``reset(rng)``
    start of a block (draws erasure probabilities / initial GEC states)
``step()``
    one broadcast; returns a bool array, True where the receiver got it
``reception_probs()``
    per-receiver probability that the *next* step succeeds
``prev_good()``
    per-receiver bool, channel state observed in the last step (GEC only)

Receivers are independent of each other.  One generator drives all of them
within a block, so a block is reproducible from its seed.
"""
from dataclasses import dataclass

import numpy as np

GOOD = "G"
BAD = "B"

P_MAX = 0.999  # erasure probabilities are clamped here so 1/(1-p) stays finite
PROB_FLOOR = 0.001  # floor on every reception probability used in a division


def clamp_erasure(p):
    return np.clip(np.asarray(p, dtype=np.float64), 0.0, P_MAX)


def b_from_memory(mu: float) -> float:
    """Symmetric GEC transition probability b = g for memory content ``mu``."""
    if not 0.0 <= mu < 1.0:
        raise ValueError(f"memory content must lie in [0, 1), got {mu}")
    return (1.0 - mu) / 2.0


def memory_from_b(b: float, g: float | None = None) -> float:
    g = b if g is None else g
    return 1.0 - b - g


@dataclass(frozen=True)
class GecParams:
    b: float  # Pr(G -> B)
    g: float  # Pr(B -> G)

    def __post_init__(self):
        if not (0.0 < self.b <= 1.0 and 0.0 < self.g <= 1.0):
            raise ValueError(f"GEC transition probabilities must be in (0, 1], got b={self.b}, g={self.g}")
        if not 0.0 <= self.mu < 1.0:
            raise ValueError(f"GEC memory must be in [0, 1), got {self.mu}")

    @classmethod
    def from_memory(cls, mu: float) -> "GecParams":
        b = b_from_memory(mu)
        return cls(b, b)

    @property
    def mu(self) -> float:
        return 1.0 - self.b - self.g

    @property
    def p_good(self) -> float:
        return self.g / (self.b + self.g)

    @property
    def p_bad(self) -> float:
        return self.b / (self.b + self.g)

    @property
    def symmetric(self) -> bool:
        """True in the equiprobable b = g regime the experiments assume."""
        return self.b == self.g and self.b <= 0.5

    def to_good(self, state: str) -> float:
        """Pr(C -> G) given the previous state."""
        return 1.0 - self.b if state == GOOD else self.g


class MemorylessChannel:
    """Independent Bernoulli erasures, probability p_i at receiver i.

    Either pass fixed ``p`` or a ``p_range``; with a range, fresh p_i are
    drawn uniformly on every ``reset``.
    """

    has_memory = False

    def __init__(self, m: int, p=None, p_range=(0.05, 0.3)):
        self.m = int(m)
        self.p_range = None if p is not None else (float(p_range[0]), float(p_range[1]))
        if p is None:
            p = np.full(self.m, np.mean(self.p_range))
        p = np.broadcast_to(clamp_erasure(p), (self.m,)).copy()
        self.p = p
        self.rng = np.random.default_rng(0)

    def reset(self, rng):
        self.rng = rng
        if self.p_range is not None:
            lo, hi = self.p_range
            self.p = clamp_erasure(rng.uniform(lo, hi, size=self.m))

    def step(self):
        return self.rng.random(self.m) >= self.p

    def step_receiver(self, i: int) -> bool:
        return bool(self.rng.random() >= self.p[i])

    def reception_probs(self):
        return np.maximum(1.0 - self.p, PROB_FLOOR)

    def prev_good(self):
        raise TypeError("memoryless channel has no previous-state information")


class GilbertElliottChannel:
    """Two-state Markov erasure channel, one independent chain per receiver.

    Each step first advances the chain, then the packet is received iff the
    new state is Good.  Initial states are drawn from the steady state.
    """

    has_memory = True

    def __init__(self, m: int, params: GecParams):
        self.m = int(m)
        self.params = params
        self.good = np.ones(self.m, dtype=bool)
        self.rng = np.random.default_rng(0)

    @classmethod
    def from_memory(cls, m: int, mu: float) -> "GilbertElliottChannel":
        return cls(m, GecParams.from_memory(mu))

    def reset(self, rng):
        self.rng = rng
        self.good = rng.random(self.m) < self.params.p_good

    def step(self):
        u = self.rng.random(self.m)
        stay_good = u >= self.params.b
        leave_bad = u < self.params.g
        self.good = np.where(self.good, stay_good, leave_bad)
        return self.good.copy()

    def step_receiver(self, i: int) -> bool:
        u = self.rng.random()
        self.good[i] = (u >= self.params.b) if self.good[i] else (u < self.params.g)
        return bool(self.good[i])

    def reception_probs(self):
        pr = np.where(self.good, 1.0 - self.params.b, self.params.g)
        return np.maximum(pr, PROB_FLOOR)

    def prev_good(self):
        return self.good.copy()

    def states(self):
        return [GOOD if x else BAD for x in self.good]


class ScriptedChannel:
    """Replays a fixed sequence of reception vectors (tests and golden replays).

    ``receptions`` is a sequence of length-m bool arrays; once exhausted every
    receiver gets every packet.  ``probs`` are the reception probabilities the
    weights see (defaults to 1), ``good`` optional fixed channel-state labels
    for layered selection.
    """

    def __init__(self, m: int, receptions=(), probs=None, good=None):
        self.m = int(m)
        self._script = [np.asarray(r, dtype=bool) for r in receptions]
        self._pos = 0
        self.probs = np.ones(self.m) if probs is None else np.asarray(probs, dtype=np.float64)
        self.good = None if good is None else np.asarray(good, dtype=bool)
        self.has_memory = self.good is not None

    def reset(self, rng=None):
        self._pos = 0

    def step(self):
        if self._pos < len(self._script):
            r = self._script[self._pos]
            self._pos += 1
            return r.copy()
        return np.ones(self.m, dtype=bool)

    def reception_probs(self):
        return np.maximum(self.probs, PROB_FLOOR)

    def prev_good(self):
        if self.good is None:
            raise TypeError("scripted channel was built without state labels")
        return self.good.copy()
