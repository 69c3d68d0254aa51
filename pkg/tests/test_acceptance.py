"""Acceptance gate: ten end-to-end criteria at their stated tolerances.

Each criterion prints one PASS/FAIL line (also collected into the pytest
terminal summary).  Run directly with ``python3 tests/test_acceptance.py``
for the lines alone.
"""
import functools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import EXAMPLE  # noqa: E402
from idnc.channels import GilbertElliottChannel, ScriptedChannel  # noqa: E402
from idnc.feedback import StateFeedbackMatrix, compute_ict_oct  # noqa: E402
from idnc.simulator import (  # noqa: E402
    RLNC,
    AggregateMetrics,
    ChannelSpec,
    ExperimentConfig,
    replay_schedule,
    run_blocks,
    run_recovery,
)
from idnc.ssp import (  # noqa: E402
    SspState,
    enumerate_actions,
    expected_cost,
    heuristic_policy,
    monte_carlo_cost,
    optimal_policy,
    outcomes,
    realized_cost,
    transition,
    value_iteration,
)
from idnc.weights import Policy  # noqa: E402

SEED = 1
N_BLOCKS = 500
MEMORYLESS = ChannelSpec("memoryless", p_range=(0.05, 0.3))
RESULTS: list[str] = []


def report(k: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def le3(a_mean, a_se, b_mean, b_se) -> bool:
    """a <= b within three standard errors of the difference."""
    return a_mean <= b_mean + 3.0 * math.hypot(a_se, b_se)


def near3(a_mean, a_se, b_mean, b_se) -> bool:
    return abs(a_mean - b_mean) <= 3.0 * math.hypot(a_se, b_se)


@functools.lru_cache(maxsize=None)
def blocks(cfg: ExperimentConfig):
    """Every simulation in this file runs with per-slot invariant checks on."""
    return run_blocks(cfg, check=True)


def agg(cfg) -> AggregateMetrics:
    return AggregateMetrics.from_blocks(blocks(cfg))


def cfg(policy, n=15, m=15, channel=MEMORYLESS, n_blocks=N_BLOCKS):
    return ExperimentConfig(n, m, channel, policy, n_blocks=n_blocks, seed=SEED)


# 1 -----------------------------------------------------------------------


def criterion_1():
    sfm = StateFeedbackMatrix(EXAMPLE)
    runs = []
    for sched in ([{0, 1}, {2}, {5}, {4}, {3}], [{0, 1}, {2, 3, 4}, {5}, {2}, {3}, {4}]):
        t0 = time.perf_counter()
        st = replay_schedule(sfm, sched)
        dt = time.perf_counter() - t0
        runs.append((compute_ict_oct(st)[1], float(st.delays.mean()), dt))
    (oa, da, ta), (ob, db, tb) = runs
    ok = (oa, da, ob, db) == (5, 1.25, 6, 0.25) and max(ta, tb) < 1e-3
    return report(1, ok, f"replays oct={oa} delay={da} ({ta * 1e3:.3f} ms) / "
                         f"oct={ob} delay={db} ({tb * 1e3:.3f} ms)")


# 2 -----------------------------------------------------------------------


def criterion_2():
    sfm = StateFeedbackMatrix(EXAMPLE)
    out = {}
    for name in ("min-oct", "min-dd"):
        st, _ = run_recovery(sfm, ScriptedChannel(4), Policy.parse(name), cap=100, check=True)
        out[name] = (compute_ict_oct(st)[1], float(st.delays.mean()), st.schedule)
    ok = out["min-oct"][0] == 5 and out["min-dd"][1] == 0.25

    def show(s):
        return "; ".join("+".join(str(j + 1) for j in sorted(x)) for x in s)

    detail = (f"min-oct oct={out['min-oct'][0]} (want 5) [{show(out['min-oct'][2])}], "
              f"min-dd delay={out['min-dd'][1]} (want 0.25)")
    return report(2, ok, detail)


# 3 -----------------------------------------------------------------------


def oracle_instances(count=54, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        m = int(rng.integers(1, 5))
        n = int(rng.integers(1, 12 // m + 1))
        F = (rng.random((m, n)) < 0.5).astype(np.uint8)
        if not F.any():
            continue
        p = (0.0, 0.1, 0.3)[len(out) % 3]
        out.append((StateFeedbackMatrix(F), p))
    return out


def criterion_3(episodes=10_000):
    t0 = time.perf_counter()
    worst_sum = worst_cost = 0.0
    bad = []
    insts = oracle_instances()
    for k, (sfm, p) in enumerate(insts):
        vf = value_iteration(sfm, p)
        for s in vf.sfms.values():
            st = SspState.start(s)
            if st.absorbing:
                continue
            for a in enumerate_actions(st):
                tr = [transition(st, a, o, p) for o in outcomes(st)]
                worst_sum = max(worst_sum, abs(sum(q for _, q in tr) - 1.0))
                avg = sum(q * realized_cost(st, nxt) for nxt, q in tr)
                worst_cost = max(worst_cost, abs(avg - expected_cost(st, a, p)))
        rng = np.random.default_rng([SEED, k])
        opt = monte_carlo_cost(sfm, p, optimal_policy(vf), episodes, rng)
        for h in ("min-oct", "min-dd", "mwvs"):
            est = monte_carlo_cost(sfm, p, heuristic_policy(h, p), episodes, rng)
            if not le3(opt.mean, opt.se, est.mean, est.se):
                bad.append((k, h, opt.mean, est.mean))
    dt = time.perf_counter() - t0
    ok = worst_sum <= 1e-12 and worst_cost <= 1e-12 and not bad and dt <= 120
    return report(3, ok, f"{len(insts)} instances, max |sum P - 1|={worst_sum:.1e}, "
                         f"max cost gap={worst_cost:.1e}, optimal-vs-heuristic violations={len(bad)}, {dt:.1f} s")


# 4 -----------------------------------------------------------------------

ALL_POLICIES = ("min-oct", "min-dd", "mwvs", "mwvs@0", "mwvs@1",
                "min-oct-layered", "min-dd-layered", "mwvs-layered")


def criterion_4(count=1000):
    rng = np.random.default_rng(SEED)
    mismatches = 0
    for _ in range(count):
        m, n = (int(x) for x in rng.integers(1, 21, 2))
        sfm = StateFeedbackMatrix((rng.random((m, n)) < rng.uniform(0.05, 0.6)).astype(np.uint8))
        good = rng.random(m) < 0.5
        for name in ALL_POLICIES:
            pol = Policy.parse(name)
            ch = ScriptedChannel(m, good=good if pol.layered else None)
            st, _ = run_recovery(sfm, ch, pol, cap=50 * n, check=True)
            ict, _ = compute_ict_oct(st)
            mismatches += int(np.count_nonzero(ict != st.initial_wants + st.delays))
    return report(4, mismatches == 0, f"{count} erasure-free blocks x {len(ALL_POLICIES)} policies, "
                                      f"{mismatches} receivers with T != W + D")


# 5 -----------------------------------------------------------------------


def criterion_5():
    t0 = time.perf_counter()
    r = {p: agg(cfg(p)) for p in ("min-oct", "mwvs", "min-dd", RLNC)}
    dt = time.perf_counter() - t0
    o, d = (lambda p: (r[p].mean_oct, r[p].se_oct)), (lambda p: (r[p].mean_delay, r[p].se_delay))
    checks = [
        le3(*o("min-oct"), *o("mwvs")), le3(*o("mwvs"), *o("min-dd")),
        le3(*d("min-dd"), *d("mwvs")), le3(*d("mwvs"), *d("min-oct")),
        all(le3(*o(RLNC), *o(p)) for p in ("min-oct", "mwvs", "min-dd")),
        dt <= 300,
    ]
    detail = ", ".join(f"{p} oct={r[p].mean_oct:.3f}+-{r[p].se_oct:.3f} delay={r[p].mean_delay:.3f}"
                       for p in ("min-oct", "mwvs", "min-dd")) + f", rlnc oct={r[RLNC].mean_oct:.3f}, {dt:.1f} s"
    return report(5, all(checks), detail)


# 6 -----------------------------------------------------------------------


def criterion_6():
    a1, mo = agg(cfg("mwvs@1")), agg(cfg("min-oct"))
    a0, md = agg(cfg("mwvs@0")), agg(cfg("min-dd"))
    ok1 = near3(a1.mean_oct, a1.se_oct, mo.mean_oct, mo.se_oct)
    ok0 = near3(a0.mean_delay, a0.se_delay, md.mean_delay, md.se_delay)
    return report(6, ok1 and ok0, f"mwvs@1 oct={a1.mean_oct:.3f} vs min-oct {mo.mean_oct:.3f}; "
                                  f"mwvs@0 delay={a0.mean_delay:.3f} vs min-dd {md.mean_delay:.3f}")


# 7 -----------------------------------------------------------------------


def criterion_7():
    ok = True
    parts = []
    for n in (10, 20, 30):
        r = {p: agg(cfg(p, n=n, m=30)) for p in ("mwvs", "min-oct", "min-dd")}
        v = {p: (r[p].mean_delay_variance, r[p].se_delay_variance) for p in r}
        good = le3(*v["mwvs"], *v["min-oct"]) and le3(*v["mwvs"], *v["min-dd"])
        ok &= good
        parts.append(f"N={n} {'ok' if good else 'X'} var mwvs={v['mwvs'][0]:.3f} min-oct={v['min-oct'][0]:.3f} "
                     f"min-dd={v['min-dd'][0]:.3f}")
    return report(7, ok, "; ".join(parts))


# 8 -----------------------------------------------------------------------


def criterion_8():
    parts, ok = [], True
    for mu, first, second in ((0.2, "mwvs", "mwvs-layered"), (0.9, "mwvs-layered", "mwvs")):
        ch = ChannelSpec("gec", mu=mu)
        a, b = agg(cfg(first, channel=ch)), agg(cfg(second, channel=ch))
        good = le3(a.mean_oct, a.se_oct, b.mean_oct, b.se_oct)
        ok &= good
        parts.append(f"mu={mu}: {first} {a.mean_oct:.3f} <= {second} {b.mean_oct:.3f} {'ok' if good else 'X'}")
    return report(8, ok, "; ".join(parts))


# 9 -----------------------------------------------------------------------


def criterion_9(steps=100_000, acf_tol=0.01):
    ok, parts = True, []
    for mu in (0.0, 0.6, 0.98):
        ch = GilbertElliottChannel.from_memory(1, mu)
        ch.reset(np.random.default_rng([SEED, int(mu * 100)]))
        x = np.array([ch.step()[0] for _ in range(steps)], dtype=np.float64)
        pg = ch.params.g / (ch.params.b + ch.params.g)
        # a two-state chain with memory mu inflates the variance of the mean by (1+mu)/(1-mu)
        se = math.sqrt(pg * (1 - pg) / steps * (1 + mu) / (1 - mu))
        freq_ok = abs(x.mean() - pg) <= 3 * se
        xc = x - x.mean()
        acf = float(xc[:-1] @ xc[1:] / (xc @ xc))
        acf_ok = abs(acf - mu) <= acf_tol
        ok &= freq_ok and acf_ok
        parts.append(f"mu={mu}: freq={x.mean():.4f} (3se={3 * se:.4f}) acf1={acf:.4f}")
    return report(9, ok, "; ".join(parts))


# 10 ----------------------------------------------------------------------


def criterion_10():
    # every run goes through check=True, which raises on a bad clique or an out-of-set delta
    cfgs = _cached_cfgs()
    checked = sum(b.cliques_checked for c in cfgs for b in blocks(c))
    probe = cfg("mwvs-layered", channel=ChannelSpec("gec", mu=0.6), n_blocks=50)
    first = [(b.oct, b.final_delays.tolist()) for b in run_blocks(probe, check=True)]
    again = [(b.oct, b.final_delays.tolist()) for b in run_blocks(probe, check=True)]
    par = [(b.oct, b.final_delays.tolist()) for b in run_blocks(probe, jobs=2, check=True)]
    base = cfg("mwvs")
    same = agg(base) == AggregateMetrics.from_blocks(run_blocks(base))
    ok = first == again == par and same
    return report(10, ok, f"{len(cfgs)} checked experiment configs, {checked} cliques/deltas validated, "
                          f"reruns and 2-process run bit-identical={ok}")


def _cached_cfgs():
    # the simulation configs of criteria 5-8
    out = [cfg(p) for p in ("min-oct", "mwvs", "min-dd", RLNC, "mwvs@1", "mwvs@0")]
    out += [cfg(p, n=n, m=30) for n in (10, 20, 30) for p in ("mwvs", "min-oct", "min-dd")]
    out += [cfg(p, channel=ChannelSpec("gec", mu=mu)) for mu in (0.2, 0.9) for p in ("mwvs", "mwvs-layered")]
    return out


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.slow
@pytest.mark.parametrize("k", range(1, 11), ids=[f"criterion_{k}" for k in range(1, 11)])
def test_acceptance(k):
    assert CRITERIA[k - 1]()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
