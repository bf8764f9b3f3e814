"""Deterministic, line-oriented event traces."""
from __future__ import annotations

from dataclasses import dataclass, field

from .requests import fmt_float

KINDS = ("REQ_RECV", "DECOMPOSE", "CREATE", "PAIR_GEN", "PURIFY", "SWAP",
         "TELEPORT", "MSG", "RSP", "RELEASE")


def _fmt(value):
    if isinstance(value, float):
        return fmt_float(value)
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    return str(value)


@dataclass
class TraceEvent:
    seq: int
    node: str
    kind: str
    request: int
    detail: dict = field(default_factory=dict)

    def format(self):
        cols = [str(self.seq), self.node, self.kind, str(self.request)]
        cols += [f"{k}={_fmt(v)}" for k, v in self.detail.items()]
        return "\t".join(cols)

    @classmethod
    def parse(cls, line):
        cols = line.rstrip("\n").split("\t")
        detail = {}
        for col in cols[4:]:
            key, _, val = col.partition("=")
            detail[key] = val
        return cls(int(cols[0]), cols[1], cols[2], int(cols[3]), detail)

    @property
    def ops(self):
        raw = self.detail.get("ops", "")
        if isinstance(raw, (list, tuple)):
            return list(raw)
        return [op for op in raw.split(";") if op]


class Tracer:
    def __init__(self):
        self.events = []

    def record(self, node, kind, request, **detail):
        if kind not in KINDS:
            raise ValueError(f"unknown trace event kind {kind!r}")
        ev = TraceEvent(len(self.events) + 1, node, kind, request, detail)
        self.events.append(ev)
        return ev

    def format(self):
        return "".join(ev.format() + "\n" for ev in self.events)


def parse_trace(text):
    return [TraceEvent.parse(line) for line in text.splitlines() if line.strip()]
