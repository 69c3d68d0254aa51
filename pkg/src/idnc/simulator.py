"""Block simulation (initial phase + recovery loop) and multi-block experiments."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channels import GilbertElliottChannel, MemorylessChannel, b_from_memory
from .feedback import RecoveryState, StateFeedbackMatrix, apply_slot, compute_ict_oct, run_initial_phase
from .graph import build_graph, coded_packet, is_clique, is_maximal
from .selection import select_for_policy
from .ssp import SspState, hyperrect_delta
from .weights import Policy

RLNC = "rlnc"


class SlotCapExceeded(RuntimeError):
    def __init__(self, state: RecoveryState, cap: int):
        super().__init__(f"recovery not complete after {cap} slots; remaining wants {state.wants.tolist()}")
        self.state = state
        self.cap = cap


class InvariantViolation(AssertionError):
    pass


class BlockError(RuntimeError):
    def __init__(self, block: int, cause: Exception):
        super().__init__(f"block {block}: {cause}")
        self.block = block
        self.cause = cause


@dataclass(frozen=True)
class ChannelSpec:
    """Channel family for an experiment: memoryless (fixed p or a range) or GEC(mu)."""

    kind: str = "memoryless"
    p_range: tuple[float, float] = (0.05, 0.3)
    p: float | None = None
    mu: float = 0.0

    def __post_init__(self):
        if self.kind not in ("memoryless", "gec"):
            raise ValueError(f"channel kind must be memoryless or gec, got {self.kind!r}")
        lo, hi = self.p_range
        if not 0.0 <= lo <= hi < 1.0:
            raise ValueError(f"erasure range must satisfy 0 <= lo <= hi < 1, got {self.p_range}")
        if self.p is not None and not 0.0 <= self.p < 1.0:
            raise ValueError(f"erasure probability must be in [0, 1), got {self.p}")
        if self.kind == "gec":
            b_from_memory(self.mu)

    def build(self, m: int):
        if self.kind == "gec":
            return GilbertElliottChannel.from_memory(m, self.mu)
        return MemorylessChannel(m, p=self.p, p_range=self.p_range)

    @property
    def label(self) -> str:
        if self.kind == "gec":
            return f"mu={self.mu:g}"
        if self.p is not None:
            return f"p={self.p:g}"
        return f"p=[{self.p_range[0]:g},{self.p_range[1]:g}]"


@dataclass(frozen=True)
class ExperimentConfig:
    n_packets: int
    m_receivers: int
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    policy: str = "mwvs"
    n_blocks: int = 500
    seed: int = 0
    slot_cap: int | None = None

    def __post_init__(self):
        for name in ("n_packets", "m_receivers", "n_blocks"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.policy != RLNC:
            pol = Policy.parse(self.policy)
            if pol.layered and self.channel.kind != "gec":
                raise ValueError(f"{pol.name} needs a channel with memory")
        if self.slot_cap is not None and self.slot_cap < self.n_packets:
            raise ValueError(f"slot_cap must be >= n_packets ({self.n_packets}), got {self.slot_cap}")

    @property
    def cap(self) -> int:
        """Explicit slot cap, else 50*N (plus 50/g headroom on a GEC)."""
        if self.slot_cap is not None:
            return self.slot_cap
        cap = 50 * self.n_packets
        if self.channel.kind == "gec":
            cap += math.ceil(50.0 / b_from_memory(self.channel.mu))
        return cap


@dataclass
class BlockMetrics:
    ict: np.ndarray
    oct: int
    final_delays: np.ndarray | None
    initial_wants: np.ndarray
    erased: np.ndarray | None = None
    cliques_checked: int = 0

    @property
    def mean_delay(self) -> float:
        if self.final_delays is None:
            return math.nan
        return float(np.mean(self.final_delays))

    @property
    def delay_variance(self) -> float:
        return block_delay_variance(self.final_delays)


def block_delay_variance(final_delays) -> float:
    """Across-receiver variance (population, ddof=0) of final decoding delays in one block."""
    if final_delays is None:
        return math.nan
    return float(np.var(np.asarray(final_delays, dtype=np.float64)))


@dataclass(frozen=True)
class AggregateMetrics:
    n_blocks: int
    mean_oct: float
    se_oct: float
    mean_delay: float
    se_delay: float
    mean_delay_variance: float
    se_delay_variance: float

    @classmethod
    def from_blocks(cls, blocks: list[BlockMetrics]) -> AggregateMetrics:
        def mse(x):
            x = np.asarray(x, dtype=np.float64)
            if np.isnan(x).all():
                return math.nan, math.nan
            se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
            return float(x.mean()), se

        o = mse([b.oct for b in blocks])
        d = mse([b.mean_delay for b in blocks])
        v = mse([b.delay_variance for b in blocks])
        return cls(len(blocks), o[0], o[1], d[0], d[1], v[0], v[1])


def _check_clique(graph, state, clique, policy):
    if not is_clique(graph, clique):
        raise InvariantViolation(f"selected vertices are not pairwise adjacent: {clique}")
    F = state.sfm.entries
    for i in clique.targeted:
        if sum(int(F[i, j]) for j in clique.packet_set) != 1:
            raise InvariantViolation(f"receiver {i} cannot decode {sorted(clique.packet_set)} instantly")
    if not policy.layered and not is_maximal(graph, clique):
        raise InvariantViolation(f"clique {clique} is not maximal")


def run_recovery(sfm: StateFeedbackMatrix, channel, policy: Policy, cap: int, check: bool = False):
    """Recovery loop until every Wants set is empty; returns the final state.

    With ``check`` every selected clique is validated and every one-slot
    change of W/(1-p) + D is checked against the hyper-rectangle set.
    """
    state = RecoveryState.start(sfm)
    checked = 0
    while not state.complete():
        if state.slot >= cap:
            raise SlotCapExceeded(state, cap)
        graph = build_graph(state.sfm)
        clique = select_for_policy(graph, state, policy, channel)
        rprob = channel.reception_probs()
        rec = channel.step()
        nxt, _ = apply_slot(state, clique, rec)
        if check:
            _check_clique(graph, state, clique, policy)
            hyperrect_delta(
                SspState(state.sfm, tuple(state.delays.tolist())),
                SspState(nxt.sfm, tuple(nxt.delays.tolist())),
                1.0 - rprob,
            )
            checked += 1
        state = nxt
    return state, checked


def replay_schedule(sfm: StateFeedbackMatrix, schedule, receptions=None) -> RecoveryState:
    """Send a fixed list of coded packets (each an iterable of 0-based packet ids).

    ``receptions`` optionally gives one bool vector per slot; the default is
    erasure-free.  Returns the state after the last slot.
    """
    state = RecoveryState.start(sfm)
    for k, packets in enumerate(schedule):
        rec = np.ones(sfm.m, dtype=bool) if receptions is None else receptions[k]
        state, _ = apply_slot(state, coded_packet(state.sfm, packets), rec)
    return state


def _rlnc_recovery(initial_wants: np.ndarray, channel, cap: int) -> np.ndarray:
    need = initial_wants.astype(np.int64)
    got = np.zeros_like(need)
    ict = np.where(need == 0, 0, -1)
    slot = 0
    while np.any(ict < 0):
        if slot >= cap:
            raise RuntimeError(f"RLNC recovery not complete after {cap} slots")
        slot += 1
        rec = channel.step()
        got += rec & (got < need)
        ict[(ict < 0) & (got >= need)] = slot
    return ict


def run_block(cfg: ExperimentConfig, block_rng, check: bool = False) -> BlockMetrics:
    channel = cfg.channel.build(cfg.m_receivers)
    channel.reset(block_rng)
    sfm = run_initial_phase(cfg.n_packets, channel)
    if cfg.policy == RLNC:
        return rlnc_from_sfm(sfm, channel, cfg.cap)
    state, checked = run_recovery(sfm, channel, Policy.parse(cfg.policy), cfg.cap, check)
    ict, oct_ = compute_ict_oct(state)
    return BlockMetrics(ict, oct_, state.delays.copy(), state.initial_wants.copy(), state.erased.copy(), checked)


def rlnc_from_sfm(sfm: StateFeedbackMatrix, channel, cap: int) -> BlockMetrics:
    """Idealised RLNC: every reception is innovative until W_i^s have arrived."""
    w0 = sfm.wants_sizes()
    ict = _rlnc_recovery(w0, channel, cap)
    return BlockMetrics(ict, int(ict.max()), None, w0)


def rlnc_baseline(cfg: ExperimentConfig, rng) -> BlockMetrics:
    channel = cfg.channel.build(cfg.m_receivers)
    channel.reset(rng)
    sfm = run_initial_phase(cfg.n_packets, channel)
    return rlnc_from_sfm(sfm, channel, cfg.cap)


def block_rng(seed: int, k: int) -> np.random.Generator:
    """Generator for block ``k``; identical to SeedSequence(seed).spawn(...)[k]."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def _run_range(args):
    cfg, lo, hi, check = args
    out = []
    for k in range(lo, hi):
        try:
            out.append(run_block(cfg, block_rng(cfg.seed, k), check))
        except Exception as exc:
            raise BlockError(k, exc) from exc
    return out


def run_blocks(cfg: ExperimentConfig, jobs: int = 1, check: bool = False) -> list[BlockMetrics]:
    n = cfg.n_blocks
    if jobs <= 1 or n == 1:
        return _run_range((cfg, 0, n, check))
    step = math.ceil(n / jobs)
    chunks = [(cfg, lo, min(lo + step, n), check) for lo in range(0, n, step)]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        parts = list(ex.map(_run_range, chunks))
    return [b for part in parts for b in part]


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, check: bool = False) -> AggregateMetrics:
    """Aggregate ``cfg.n_blocks`` independent blocks; deterministic in ``cfg.seed``."""
    return AggregateMetrics.from_blocks(run_blocks(cfg, jobs, check))


CSV_COLUMNS = (
    "policy", "N", "M", "channel", "mean_oct", "se_oct", "mean_delay", "se_delay",
    "delay_var", "se_var", "n_blocks", "seed",
)


def _fmt(x: float) -> str:
    return "na" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


def csv_row(cfg: ExperimentConfig, agg: AggregateMetrics) -> list[str]:
    return [
        cfg.policy, str(cfg.n_packets), str(cfg.m_receivers), cfg.channel.label,
        _fmt(agg.mean_oct), _fmt(agg.se_oct), _fmt(agg.mean_delay), _fmt(agg.se_delay),
        _fmt(agg.mean_delay_variance), _fmt(agg.se_delay_variance), str(agg.n_blocks), str(cfg.seed),
    ]
