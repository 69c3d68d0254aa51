"""Command-line front end: ``idnc run | sweep | oracle | golden``."""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import AXES, ConfigError, RunConfig, canonical_axis, parse_config
from .feedback import StateFeedbackMatrix, compute_ict_oct
from .simulator import (
    CSV_COLUMNS,
    AggregateMetrics,
    _fmt,
    csv_row,
    replay_schedule,
    run_blocks,
    run_recovery,
)
from .channels import ScriptedChannel
from .weights import Policy

# Four receivers, six packets; 1 = wanted.
EXAMPLE_SFM = np.array(
    [
        [1, 0, 1, 0, 0, 1],
        [0, 1, 1, 1, 1, 1],
        [1, 0, 0, 0, 1, 0],
        [1, 0, 0, 1, 0, 0],
    ],
    dtype=np.uint8,
)
# (name, schedule with 1-based packet ids, expected OCT, expected mean delay)
GOLDEN_SCHEDULES = (
    ("completion-first", [(1, 2), (3,), (6,), (5,), (4,)], 5, 1.25),
    ("delay-first", [(1, 2), (3, 4, 5), (6,), (3,), (4,), (5,)], 6, 0.25),
)


def atomic_write(path, text: str):
    """Write via a temp file in the same directory, so a failure leaves no partial file."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _axis_value(axis: str, v) -> str:
    return str(int(v)) if axis in ("n_packets", "m_receivers") else f"{float(v):.6f}"


def plotdata_text(results, axes) -> str:
    """Tradeoff pairs, one row per (policy, axis point): axes..., policy, mean_oct, mean_delay."""
    header = list(axes) + ["policy", "mean_oct", "mean_delay"]
    rows = []
    for where, cfg, agg in results:
        rows.append([_axis_value(a, where[a]) for a in axes] + [cfg.policy, _fmt(agg.mean_oct), _fmt(agg.mean_delay)])
    return _csv_text(header, rows)


def write_plotdata(results, axes, outdir) -> Path:
    """Write ``tradeoff_<axes>.csv`` into ``outdir``; an empty sweep gives a header-only file."""
    axes = [canonical_axis(a) for a in axes]
    name = "tradeoff_" + ("_".join(axes) if axes else "point") + ".csv"
    path = Path(outdir) / name
    atomic_write(path, plotdata_text(results, axes))
    return path


def run_config(rc: RunConfig, jobs: int = 1, check: bool = False, log=None):
    results = []
    for where, cfg in rc.points():
        agg = AggregateMetrics.from_blocks(run_blocks(cfg, jobs=jobs, check=check))
        if log is not None:
            extra = " ".join(f"{k}={v}" for k, v in where.items())
            print(f"{cfg.policy:>18} N={cfg.n_packets} M={cfg.m_receivers} {cfg.channel.label} {extra} "
                  f"oct={agg.mean_oct:.3f} delay={agg.mean_delay:.3f}", file=log)
        results.append((where, cfg, agg))
    return results


def results_csv(results) -> str:
    return _csv_text(CSV_COLUMNS, [csv_row(cfg, agg) for _, cfg, agg in results])


def _overrides(args) -> dict:
    ov = {}
    flag_map = {
        "n_packets": "n_packets", "m_receivers": "m_receivers", "channel": "channel", "p_range": "p_range",
        "p": "p", "mu": "mu", "policies": "policies", "n_blocks": "n_blocks", "slot_cap": "slot_cap",
        "seed": "seed",
    }
    for attr, key in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            ov[("experiment", key)] = v
    if getattr(args, "axis", None) is not None:
        if args.values is None:
            raise ConfigError("--axis needs --values", field="values", source="command line")
        ov[(f"sweep:{canonical_axis(args.axis)}", "values")] = args.values
    elif getattr(args, "values", None) is not None:
        raise ConfigError("--values needs --axis", field="axis", source="command line")
    return ov


def load_run_config(args) -> RunConfig:
    text, source = "", "<command line>"
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", source=str(args.config)) from None
        source = str(args.config)
    env_seed = os.environ.get("IDNC_SEED")
    default_seed = 0
    if env_seed is not None:
        try:
            default_seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"IDNC_SEED must be an integer, got {env_seed!r}", field="seed",
                              source="environment") from None
    try:
        ov = _overrides(args)
    except ValueError as exc:
        raise ConfigError(str(exc), field="axis", source="command line") from None
    if not text and ("experiment", "n_packets") not in ov:
        ov[("experiment", "n_packets")] = 15
    if not text and ("experiment", "m_receivers") not in ov:
        ov[("experiment", "m_receivers")] = 15
    return parse_config(text, source, ov, default_seed)


def _emit(text: str, out):
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    rc = load_run_config(args)
    if rc.sweeps and args.command == "run":
        raise ConfigError("run takes a single point; use sweep for [sweep:*] sections", source="command line")
    log = sys.stderr if args.verbose else None
    results = run_config(rc, jobs=args.jobs, check=args.check, log=log)
    _emit(results_csv(results), args.out)
    if getattr(args, "plotdata", None):
        write_plotdata(results, [s.axis for s in rc.sweeps], args.plotdata)
    return 0


def _parse_sfm(text: str) -> StateFeedbackMatrix:
    rows = [r.strip() for r in text.replace(";", "/").split("/") if r.strip()]
    if not rows or any(set(r) - {"0", "1"} for r in rows):
        raise ValueError(f"SFM rows must be 0/1 strings separated by '/', got {text!r}")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("SFM rows must have equal length")
    return StateFeedbackMatrix(np.array([[int(c) for c in r] for r in rows], dtype=np.uint8))


def cmd_oracle(args) -> int:
    from .ssp import heuristic_policy, monte_carlo_cost, optimal_policy, value_iteration

    if args.sfm_csv:
        sfm = StateFeedbackMatrix.from_csv(Path(args.sfm_csv).read_text())
    else:
        sfm = _parse_sfm(args.sfm)
    p = [float(x) for x in args.p.split(",")]
    if len(p) not in (1, sfm.m) or any(not 0.0 <= x < 1.0 for x in p):
        raise ValueError(f"--p needs 1 or {sfm.m} values in [0, 1)")
    p = np.broadcast_to(np.array(p), (sfm.m,))
    vf = value_iteration(sfm, p, maximal_only=not args.all_actions)
    lines = [vf.table_text()]
    lines.append(f"# start value {vf.value(sfm):.6f} after {vf.iterations} sweeps\n")
    if args.episodes:
        seed = args.seed if args.seed is not None else int(os.environ.get("IDNC_SEED", "0"))
        rng = np.random.default_rng(seed)
        est = monte_carlo_cost(sfm, p, optimal_policy(vf), args.episodes, rng)
        lines.append(f"# optimal    mc {est.mean:.6f} +- {est.se:.6f}\n")
        for name in ("min-oct", "min-dd", "mwvs"):
            est = monte_carlo_cost(sfm, p, heuristic_policy(name, p), args.episodes, rng)
            lines.append(f"# {name:<10} mc {est.mean:.6f} +- {est.se:.6f}\n")
    _emit("".join(lines), args.out)
    return 0


def golden_report():
    """(ok, lines) for the literal example schedules; informational lines for our own greedy runs."""
    sfm = StateFeedbackMatrix(EXAMPLE_SFM)
    ok = True
    lines = []
    for name, sched, want_oct, want_delay in GOLDEN_SCHEDULES:
        st = replay_schedule(sfm, [[j - 1 for j in s] for s in sched])
        _, oct_ = compute_ict_oct(st)
        delay = float(st.delays.mean())
        good = oct_ == want_oct and delay == want_delay
        ok &= good
        shown = "; ".join("+".join(map(str, s)) for s in sched)
        lines.append(f"{'PASS' if good else 'FAIL'} replay {name}: {shown} -> oct={oct_} delay={delay:.2f} "
                     f"(expected oct={want_oct} delay={want_delay:.2f})")
    for pol in ("min-oct", "min-dd", "mwvs"):
        st, _ = run_recovery(sfm, ScriptedChannel(sfm.m), Policy.parse(pol), cap=100)
        _, oct_ = compute_ict_oct(st)
        shown = "; ".join("+".join(str(j + 1) for j in sorted(s)) for s in st.schedule)
        lines.append(f"info greedy {pol}: {shown} -> oct={oct_} delay={st.delays.mean():.2f}")
    return ok, lines


def cmd_golden(args) -> int:
    ok, lines = golden_report()
    print("\n".join(lines))
    return 0 if ok else 1


def _add_experiment_flags(p):
    g = p.add_argument_group("experiment (override config file values)")
    g.add_argument("-N", "--n-packets", dest="n_packets", type=str)
    g.add_argument("-M", "--m-receivers", dest="m_receivers", type=str)
    g.add_argument("--channel", choices=("memoryless", "gec"))
    g.add_argument("--p-range", dest="p_range", help="lo,hi for per-block uniform erasure probabilities")
    g.add_argument("--p", help="fixed erasure probability (memoryless)")
    g.add_argument("--mu", help="channel memory for gec")
    g.add_argument("--policies", help="comma list, e.g. min-oct,mwvs@0.3,mwvs-layered,rlnc or 'all'")
    g.add_argument("--n-blocks", dest="n_blocks", type=str)
    g.add_argument("--slot-cap", dest="slot_cap", type=str)
    p.add_argument("--config", help="INI experiment file")
    p.add_argument("--seed", type=str, help="base seed (default: IDNC_SEED, else 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes; whole blocks per worker")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--check", action="store_true", help="validate every clique and transition delta")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="idnc", description="IDNC broadcast recovery simulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one experiment point, one CSV row per policy")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Cartesian sweep to CSV")
    _add_experiment_flags(p)
    p.add_argument("--axis", help=f"one of {', '.join(AXES)}")
    p.add_argument("--values", help="comma list; 'a,b,...,c' expands the progression")
    p.add_argument("--plotdata", help="directory for tradeoff CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="exact SSP values for a tiny SFM")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--sfm", help="rows of 0/1 separated by '/', e.g. 1010/0101")
    src.add_argument("--sfm-csv", dest="sfm_csv")
    p.add_argument("--p", default="0", help="erasure probability, one value or one per receiver")
    p.add_argument("--all-actions", action="store_true", help="every coded packet, not only maximal cliques")
    p.add_argument("--episodes", type=int, default=0, help="also Monte-Carlo the optimal and greedy policies")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("golden", help="replay the reference example schedules and check their metrics")
    p.set_defaults(func=cmd_golden)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
