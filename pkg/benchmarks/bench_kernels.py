#!/usr/bin/env python3
"""Compare the numba and numpy backends of the two hot kernels.

Kernel timings call both implementations directly on the same graphs.
The end-to-end timing runs a short experiment in two subprocesses, one
with IDNC_DISABLE_NUMBA=1, and checks that both print identical metrics.

    python3 benchmarks/bench_kernels.py [--receivers 30] [--packets 30] [--graphs 200]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from idnc import _kernels
from idnc.feedback import StateFeedbackMatrix
from idnc.graph import build_graph


def timed(fn, reps):
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def kernel_bench(m, n, count, seed):
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(count):
        F = (rng.random((m, n)) < rng.uniform(0.1, 0.4)).astype(np.uint8)
        recv, pkt = (x.astype(np.int64) for x in np.nonzero(F))
        cases.append((F, recv, pkt))

    def adj(build):
        return lambda: [build(F, r, p) for F, r, p in cases]

    graphs = [build_graph(StateFeedbackMatrix(F)) for F, _, _ in cases]
    weights = [rng.uniform(0.5, 5.0, len(g)) for g in graphs]

    def greedy(fn):
        return lambda: [fn(g.adjacency, w, w, np.ones(len(g), dtype=bool)) for g, w in zip(graphs, weights)]

    rows = []
    if _kernels.HAVE_NUMBA:
        adj(_kernels.build_adjacency_numba)()  # compile
        greedy(_kernels.greedy_clique_numba)()
    for name, np_fn, nb_fn in (
        ("build_adjacency", adj(_kernels.build_adjacency_numpy),
         adj(_kernels.build_adjacency_numba) if _kernels.HAVE_NUMBA else None),
        ("greedy_clique", greedy(_kernels.greedy_clique_numpy),
         greedy(_kernels.greedy_clique_numba) if _kernels.HAVE_NUMBA else None),
    ):
        t_np = timed(np_fn, 3) / count
        t_nb = timed(nb_fn, 3) / count if nb_fn else float("nan")
        rows.append((name, t_np, t_nb))
    return rows


END_TO_END = (
    "import time\n"
    "from idnc.simulator import ExperimentConfig, run_experiment\n"
    "cfg = ExperimentConfig({n}, {m}, policy='mwvs', n_blocks={blocks}, seed=1)\n"
    "run_experiment(ExperimentConfig(4, 4, n_blocks=2))\n"
    "t0 = time.perf_counter(); a = run_experiment(cfg); dt = time.perf_counter() - t0\n"
    "print(repr((a.mean_oct, a.mean_delay, a.mean_delay_variance)), dt)\n"
)


def end_to_end(m, n, blocks):
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, IDNC_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END.format(n=n, m=m, blocks=blocks)],
                             env=env, capture_output=True, text=True, check=True)
        metrics, dt = res.stdout.rsplit(" ", 1)
        out[label] = (metrics, float(dt))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--receivers", type=int, default=30)
    ap.add_argument("--packets", type=int, default=30)
    ap.add_argument("--graphs", type=int, default=200)
    ap.add_argument("--blocks", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"backend active: {_kernels.BACKEND}; M={args.receivers} N={args.packets}")
    print(f"{'kernel':<16}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name, t_np, t_nb in kernel_bench(args.receivers, args.packets, args.graphs, args.seed):
        print(f"{name:<16}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>10.1f}")

    e2e = end_to_end(args.receivers, args.packets, args.blocks)
    same = e2e["numba"][0] == e2e["numpy"][0]
    print(f"end-to-end {args.blocks} blocks: numba {e2e['numba'][1]:.2f} s, numpy {e2e['numpy'][1]:.2f} s, "
          f"speedup {e2e['numpy'][1] / e2e['numba'][1]:.1f}x, identical metrics: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
