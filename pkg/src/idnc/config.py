"""Experiment and sweep configuration: INI-style key/value text.

::

    [experiment]
    n_packets = 15
    m_receivers = 15
    channel = memoryless
    p_range = 0.05,0.3
    policies = min-oct,mwvs,min-dd
    n_blocks = 500
    seed = 1

    [sweep:memory]
    values = 0,0.2,...,0.98

One ``[sweep:<axis>]`` section per swept axis; several sections sweep their
Cartesian product.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace

from .simulator import RLNC, ChannelSpec, ExperimentConfig
from .weights import Policy

AXES = ("n_packets", "m_receivers", "memory", "lambda")
_AXIS_ALIASES = {"n": "n_packets", "packets": "n_packets", "m": "m_receivers", "receivers": "m_receivers",
                 "mu": "memory", "lam": "lambda"}
EXPERIMENT_KEYS = ("n_packets", "m_receivers", "channel", "p_range", "p", "mu", "policies", "n_blocks", "seed",
                   "slot_cap")


class ConfigError(ValueError):
    def __init__(self, msg: str, field: str | None = None, line: int | None = None, source: str = "<config>"):
        where = source + (f":{line}" if line else "")
        if field:
            where += f": field '{field}'"
        super().__init__(f"{where}: {msg}")
        self.field = field
        self.line = line


def canonical_axis(axis: str) -> str:
    a = axis.strip().lower().replace("-", "_")
    a = _AXIS_ALIASES.get(a, a)
    if a not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    return a


def _num(tok: str) -> float:
    tok = tok.strip()
    try:
        return float(tok)
    except ValueError:
        raise ValueError(f"not a number: {tok!r}") from None


def parse_values(text: str, integer: bool = False) -> list:
    """Comma list; ``a,b,...,c`` expands the progression a, b, ... and ends with c."""
    toks = [t.strip() for t in text.split(",") if t.strip()]
    if not toks:
        raise ValueError("empty value list")
    if "..." in toks:
        k = toks.index("...")
        if k < 2 or k != len(toks) - 2:
            raise ValueError("ellipsis form is 'a,b,...,c'")
        head = [_num(t) for t in toks[:k]]
        step = head[-1] - head[-2]
        stop = _num(toks[-1])
        if step <= 0:
            raise ValueError("ellipsis progression must increase")
        vals = list(head)
        x = head[-1]
        while x + step < stop - 1e-9:
            x += step
            vals.append(round(x, 10))
        vals.append(stop)
    else:
        vals = [_num(t) for t in toks]
    if integer:
        if any(v != int(v) for v in vals):
            raise ValueError("values must be integers")
        vals = [int(v) for v in vals]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError("values must be strictly increasing")
    return vals


def expand_policies(text: str | list, has_memory: bool) -> list[str]:
    items = text if isinstance(text, list) else [t.strip() for t in text.split(",") if t.strip()]
    out = []
    for it in items:
        if it.lower() == "all":
            base = ["min-oct", "min-dd", "mwvs"]
            if has_memory:
                base += [p + "-layered" for p in base]
            out += base + [RLNC]
        elif it.lower() == RLNC:
            out.append(RLNC)
        else:
            out.append(Policy.parse(it).name)
    if not out:
        raise ValueError("no policies given")
    seen = []
    for p in out:
        if p not in seen:
            seen.append(p)
    return seen


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "axis", canonical_axis(self.axis))
        if not self.values:
            raise ValueError("sweep values must be nonempty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")


@dataclass(frozen=True)
class RunConfig:
    base: ExperimentConfig
    policies: tuple[str, ...] = ("mwvs",)
    sweeps: tuple[SweepSpec, ...] = field(default_factory=tuple)

    def points(self):
        """Yield (axis-values dict, ExperimentConfig) over the Cartesian sweep, policy innermost."""
        import itertools

        grids = [[(s.axis, v) for v in s.values] for s in self.sweeps]
        for combo in itertools.product(*grids) if grids else [()]:
            where = dict(combo)
            cfg = self.base
            lam = None
            for axis, v in combo:
                if axis == "n_packets":
                    cfg = replace(cfg, n_packets=int(v))
                elif axis == "m_receivers":
                    cfg = replace(cfg, m_receivers=int(v))
                elif axis == "memory":
                    cfg = replace(cfg, channel=replace(cfg.channel, kind="gec", mu=float(v)))
                elif axis == "lambda":
                    lam = float(v)
            for pol in expand_policies(list(self.policies), cfg.channel.kind == "gec"):
                if lam is not None and pol != RLNC:
                    p = Policy.parse(pol)
                    if p.kind == "mwvs":
                        pol = replace(p, lam=lam).name
                yield where, replace(cfg, policy=pol)

    def to_text(self) -> str:
        b = self.base
        ch = b.channel
        lines = ["[experiment]",
                 f"n_packets = {b.n_packets}",
                 f"m_receivers = {b.m_receivers}",
                 f"channel = {ch.kind}",
                 f"p_range = {ch.p_range[0]!r},{ch.p_range[1]!r}"]
        if ch.p is not None:
            lines.append(f"p = {ch.p!r}")
        lines += [f"mu = {ch.mu!r}",
                  f"policies = {','.join(self.policies)}",
                  f"n_blocks = {b.n_blocks}",
                  f"seed = {b.seed}"]
        if b.slot_cap is not None:
            lines.append(f"slot_cap = {b.slot_cap}")
        for s in self.sweeps:
            lines += ["", f"[sweep:{s.axis}]", "values = " + ",".join(repr(v) for v in s.values)]
        return "\n".join(lines) + "\n"


def _line_of(text: str, section: str, key: str | None) -> int | None:
    cur = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[(.+)\]$", line)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return n
            continue
        if cur == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", line):
            return n
    return None


def parse_config(text: str = "", source: str = "<config>", overrides=None, default_seed: int = 0) -> RunConfig:
    """Parse config text; ``overrides`` maps (section, key) to values given on the command line.

    Diagnostics name the offending field and, for file values, the line.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], line=line, source=source) from None
    overrides = dict(overrides or {})
    for (sec, key), val in overrides.items():
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp[sec][key] = str(val)

    def err(msg, section, key):
        if (section, key) in overrides:
            return ConfigError(msg, field=key, source="command line")
        return ConfigError(msg, field=key, line=_line_of(text, section, key), source=source)

    for sec in cp.sections():
        if sec != "experiment" and not sec.startswith("sweep:"):
            raise err(f"unknown section [{sec}]", sec, None)
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section", source=source)
    ex = cp["experiment"]
    for k in ex:
        if k not in EXPERIMENT_KEYS:
            raise err("unknown key", "experiment", k)

    def get(key, conv, default=None, required=False):
        if key not in ex:
            if required:
                raise err("missing required field", "experiment", key)
            return default
        try:
            return conv(ex[key])
        except ValueError as exc:
            raise err(str(exc), "experiment", key) from None

    def pos_int(s):
        v = int(s)
        if v < 1:
            raise ValueError(f"must be a positive integer, got {v}")
        return v

    def p_range(s):
        parts = [float(x) for x in s.split(",")]
        if len(parts) != 2:
            raise ValueError("expected 'lo,hi'")
        return (parts[0], parts[1])

    n = get("n_packets", pos_int, required=True)
    m = get("m_receivers", pos_int, required=True)
    kind = get("channel", str.strip, "memoryless")
    try:
        channel = ChannelSpec(kind=kind, p_range=get("p_range", p_range, (0.05, 0.3)),
                              p=get("p", float), mu=get("mu", float, 0.0))
    except ValueError as exc:
        key = "channel" if "kind" in str(exc) else ("mu" if "memory" in str(exc) else "p_range")
        raise err(str(exc), "experiment", key) from None
    policies_raw = get("policies", str, "mwvs")
    n_blocks = get("n_blocks", pos_int, 500)
    seed = get("seed", int, default_seed)
    slot_cap = get("slot_cap", pos_int)

    sweeps = []
    for sec in cp.sections():
        if not sec.startswith("sweep:"):
            continue
        try:
            axis = canonical_axis(sec.split(":", 1)[1])
        except ValueError as exc:
            raise err(str(exc), sec, None) from None
        if "values" not in cp[sec]:
            raise err("missing required field", sec, "values")
        try:
            vals = parse_values(cp[sec]["values"], integer=axis in ("n_packets", "m_receivers"))
            sweeps.append(SweepSpec(axis, tuple(vals)))
        except ValueError as exc:
            raise err(str(exc), sec, "values") from None

    has_memory = kind == "gec" or any(s.axis == "memory" for s in sweeps)
    try:
        policies = tuple(expand_policies(policies_raw, has_memory))
    except ValueError as exc:
        raise err(str(exc), "experiment", "policies") from None
    if not has_memory:
        for p in policies:
            if p != RLNC and Policy.parse(p).layered:
                raise err(f"{p} needs a channel with memory (channel = gec or a memory sweep)", "experiment",
                          "policies")
    try:
        base = ExperimentConfig(n, m, channel, policies[0] if policies[0] == RLNC or kind == "gec"
                                else _memoryless_safe(policies), n_blocks, seed, slot_cap)
    except ValueError as exc:
        raise err(str(exc), "experiment", _guess_field(str(exc))) from None
    return RunConfig(base, policies, tuple(sweeps))


def _memoryless_safe(policies) -> str:
    for p in policies:
        if p == RLNC or not Policy.parse(p).layered:
            return p
    return policies[0]


def _guess_field(msg: str) -> str | None:
    for k in EXPERIMENT_KEYS:
        if k in msg:
            return k
    return None
