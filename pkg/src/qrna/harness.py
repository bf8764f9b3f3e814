"""Scenario files, batch runs, reports and routing-table checks.

A scenario is a small line-oriented file::

    topology example.topo        # relative to the scenario file
    mode deterministic
    seed 7
    set flink=0.9 rounds=0
    Node11 REQ 1 STATE spec=cluster(3) fmin=0.99 smax=0.1 targets=(...) enc=RAW

Request lines start with the requesting node followed by a request in
wire grammar.  Command-line options override the header lines.
"""
from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .engine import DETERMINISTIC, STOCHASTIC, Config, Engine
from .errors import ParseError, QrnaError
from .requests import FAIL, OK, Response, decode, fmt_float
from .topology import Topology, build_tables, format_tables

# scenario knob -> (Config field or link override, parser)
KNOBS = {
    "p_gate": ("p_gate", float),
    "rounds": ("rounds", int),
    "retries": ("retries", int),
    "pairs": ("pairs", int),
    "cap": ("qubit_cap", int),
    "flink": ("flink", float),
    "pgen": ("pgen", float),
}
LINK_KNOBS = ("flink", "pgen")

REPORT_COLUMNS = ("request", "requester", "status", "f", "s", "pairs", "gen_failures",
                  "purify_attempts", "purify_successes", "swaps", "teleports", "why")


def bundled(name):
    """Path of a file shipped in the package data directory."""
    return Path(str(resources.files("qrna") / "data" / name))


@dataclass
class Scenario:
    topology: Path | None = None
    mode: str = DETERMINISTIC
    seed: int = 0
    knobs: dict = field(default_factory=dict)
    requests: list = field(default_factory=list)  # (requester, request)
    source: str | None = None

    @classmethod
    def parse(cls, text, source=None, base=None):
        sc = cls(source=source)
        base = Path(base) if base is not None else None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                sc._parse_line(line, base)
            except ParseError as exc:
                raise ParseError(f"bad request: {exc}", line=lineno, source=source) from None
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{exc} in {raw.strip()!r}", line=lineno, source=source) from None
        return sc

    def _parse_line(self, line, base):
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "topology":
            path = Path(rest)
            self.topology = path if path.is_absolute() or base is None else base / path
        elif head == "mode":
            if rest not in (DETERMINISTIC, STOCHASTIC):
                raise ValueError(f"unknown mode {rest!r}")
            self.mode = rest
        elif head == "seed":
            self.seed = _seed(rest)
        elif head == "set":
            for item in rest.split():
                key, sep, val = item.partition("=")
                if not sep or key not in KNOBS:
                    raise ValueError(f"unknown knob {item!r}; known: {', '.join(KNOBS)}")
                self.knobs[key] = KNOBS[key][1](val)
        elif rest.startswith("REQ "):
            self.requests.append((head, decode(rest)))
        else:
            raise ValueError(f"unknown directive {head!r}")

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls.parse(path.read_text(), source=str(path), base=path.parent)

    def config(self, **extra):
        kw = {KNOBS[k][0]: v for k, v in self.knobs.items() if k not in LINK_KNOBS}
        return Config(mode=self.mode, seed=self.seed, **kw, **extra)

    def check(self, topo):
        """Names referenced by requests must exist in the topology."""
        problems = []
        for requester, req in self.requests:
            names = {requester} | {t.node for t in req.targets}
            problems += [f"request {req.id}: unknown element {n!r}"
                         for n in sorted(names) if n not in topo]
        return problems


def _seed(text):
    seed = int(text)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


@dataclass
class RunResult:
    trace: str
    report: str
    responses: list
    engine: Engine

    @property
    def all_ok(self):
        return all(r.status == OK for r in self.responses)


def load_topology(scenario, topology=None):
    topo = Topology.load(topology or scenario.topology or bundled("example.topo"))
    flink, pgen = scenario.knobs.get("flink"), scenario.knobs.get("pgen")
    if flink is not None or pgen is not None:
        topo = topo.with_link_params(f_link=flink, p_gen=pgen)
    return topo


def run(scenario, topology=None, seed=None, mode=None, check_invariants=False):
    """Execute every request of ``scenario`` in order.

    Each request is released once its response is recorded, so requests do
    not compete for qubits.  Errors become FAIL rows.  ``check_invariants``
    validates every intermediate state.
    """
    if seed is not None:
        scenario.seed = seed
    if mode is not None:
        scenario.mode = mode
    topo = load_topology(scenario, topology)
    engine = Engine(topo, scenario.config(check_invariants=check_invariants))
    problems = scenario.check(topo)
    rows, responses = ["\t".join(REPORT_COLUMNS)], []
    for requester, req in scenario.requests:
        before = dict(engine.link.stats)
        try:
            if problems:
                raise QrnaError("; ".join(problems))
            resp = engine.deliver(req, requester)
        except Exception as exc:  # noqa: BLE001 - a bad request must not end the batch
            resp = Response(req.id, FAIL, 0.0, 0.0, None, type(exc).__name__)
        try:
            engine.release(req, requester)
        except QrnaError:
            pass
        responses.append(resp)
        used = {k: engine.link.stats[k] - before.get(k, 0) for k in engine.link.stats}
        rows.append("\t".join([
            str(req.id), requester, resp.status,
            fmt_float(resp.measured_f), fmt_float(resp.measured_s),
            *(str(used[k]) for k in REPORT_COLUMNS[5:11]),
            resp.reason or "-",
        ]))
    return RunResult(engine.tracer.format(), "".join(r + "\n" for r in rows), responses, engine)


def routes(topology):
    """Printed routing tables for every node of ``topology``."""
    topo = topology if isinstance(topology, Topology) else Topology.load(topology)
    return format_tables(build_tables(topo))


def check_tables(topology, golden):
    """Compare generated tables with golden files.

    ``golden`` is a path or list of paths; each golden file holds one or
    more tables in the printed format.  Returns a unified diff, empty when
    every golden table matches.
    """
    topo = topology if isinstance(topology, Topology) else Topology.load(topology)
    tables = build_tables(topo)
    paths = [golden] if isinstance(golden, (str, Path)) else list(golden)
    diff = []
    for path in paths:
        want = Path(path).read_text()
        owners = [line.split()[1] for line in want.splitlines() if line.startswith("table ")]
        have = format_tables({o: tables[o] for o in owners if o in tables})
        missing = [o for o in owners if o not in tables]
        diff += [f"missing node {o}\n" for o in missing]
        diff += difflib.unified_diff(want.splitlines(True), have.splitlines(True),
                                     fromfile=str(path), tofile="generated")
    return "".join(diff)
