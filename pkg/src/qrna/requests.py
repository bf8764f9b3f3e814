"""Request/response tuples, qubit naming, wire encoding and constraint checks."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import density as dm
from .density import GATE_ARITY, DensityMatrix, GateOp, QubitSlot
from .errors import (
    DoubleBind,
    ParseError,
    ResourceLimit,
    ShapeError,
    SlotBusy,
    UnknownAddress,
)

NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*\Z")
U64_MAX = 2**64 - 1

NORM_TOL = 1e-12

OK = "OK"
CONSTRAINT_VIOLATION = "CONSTRAINT_VIOLATION"
FAIL = "FAIL"
STATUSES = (OK, CONSTRAINT_VIOLATION, FAIL)

ENCODINGS = ("RAW",)


def valid_name(name):
    return isinstance(name, str) and NAME_RE.match(name) is not None


@dataclass(frozen=True, order=True)
class QubitAddress:
    node: str
    vaddr: int

    def __str__(self):
        return f"{self.node}:{self.vaddr}"


@dataclass(frozen=True, order=True)
class FullVirtualId:
    requester: str
    request_id: int
    vaddr: int

    def __str__(self):
        return f"{self.requester}/{self.request_id}/{self.vaddr}"


# -- state specifications ------------------------------------------------------

CIRCUIT, BELL, GHZ, FANOUT, CLUSTER = "circuit", "bell", "ghz", "fanout", "cluster"


@dataclass(frozen=True)
class StateSpec:
    """Description of a requested pure state.

    A circuit spec lists gates over the request's target addresses, applied
    to |0...0>.  Named forms carry their own qubit count ``n``.
    """

    form: str
    n: int = 0
    alpha: complex = 0j
    beta: complex = 0j
    gates: tuple = ()

    @classmethod
    def circuit(cls, gates):
        return cls(CIRCUIT, gates=tuple(gates))

    @classmethod
    def bell(cls):
        return cls(BELL, n=2)

    @classmethod
    def ghz(cls, n):
        return cls(GHZ, n=n)

    @classmethod
    def fanout(cls, alpha, beta, n):
        return cls(FANOUT, n=n, alpha=complex(alpha), beta=complex(beta))

    @classmethod
    def cluster(cls, n):
        return cls(CLUSTER, n=n)

    def qubit_count(self, targets=None):
        if self.form == CIRCUIT:
            return None if targets is None else len(targets)
        return self.n

    def relabel(self, mapping):
        """Circuit spec with addresses replaced through ``mapping``."""
        if self.form != CIRCUIT:
            return self
        return StateSpec.circuit(
            GateOp(g.kind, [mapping[t] for t in g.targets]) for g in self.gates
        )


def target_state(spec, targets=None, cap=dm.DEFAULT_QUBIT_CAP):
    """Pure state vector for ``spec``; circuit specs need their target list."""
    if spec.form == CIRCUIT:
        if targets is None:
            raise ValueError("a circuit spec needs the target address list")
        targets = list(targets)
        n = len(targets)
    else:
        n = spec.n
    if n > cap:
        raise ResourceLimit(f"{n} qubits exceeds the cap of {cap}")
    if spec.form in (GHZ, FANOUT, BELL):
        if spec.form == FANOUT:
            a, b = spec.alpha, spec.beta
        else:
            a = b = 1 / np.sqrt(2)
        psi = np.zeros(2**n, dtype=complex)
        psi[0] += a
        psi[-1] += b
        return psi
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    if spec.form == CLUSTER:
        gates = [GateOp("H", [i]) for i in range(n)]
        gates += [GateOp("CZ", [i, i + 1]) for i in range(n - 1)]
    elif spec.form == CIRCUIT:
        pos = {t: i for i, t in enumerate(targets)}
        gates = [GateOp(g.kind, [pos[t] for t in g.targets]) for g in spec.gates]
    else:
        raise ValueError(f"unknown spec form {spec.form!r}")
    t = psi.reshape((2,) * n)
    for g in gates:
        u = dm.GATES[g.kind].reshape((2,) * (2 * len(g.targets)))
        k = len(g.targets)
        t = np.tensordot(u, t, axes=(list(range(k, 2 * k)), list(g.targets)))
        t = np.moveaxis(t, list(range(k)), list(g.targets))
    return t.reshape(-1)


# -- request / response tuples --------------------------------------------------

@dataclass(frozen=True)
class ActionOp:
    """One step of an action circuit: a gate, ``MEASZ`` or ``TELEPORT``.

    ``TELEPORT(data, near, far, dest)`` moves ``data`` over the pair
    ``near``-``far`` and names the arriving qubit ``dest``.
    """

    kind: str
    targets: tuple

    ARITY = dict(GATE_ARITY, MEASZ=1, TELEPORT=4)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))


@dataclass(frozen=True)
class StateRequest:
    id: int
    spec: StateSpec
    f_min: float
    s_max: float
    targets: tuple
    encoding: str = "RAW"

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))


@dataclass(frozen=True)
class ActionRequest:
    id: int
    circuit: tuple
    f_min: float
    s_max: float
    targets: tuple
    encoding: str = "RAW"

    def __post_init__(self):
        object.__setattr__(self, "circuit", tuple(self.circuit))
        object.__setattr__(self, "targets", tuple(self.targets))


@dataclass(frozen=True)
class Response:
    id: int
    status: str
    measured_f: float
    measured_s: float
    rho: DensityMatrix | None = field(default=None, compare=False)
    reason: str = ""

    def __eq__(self, other):
        if not isinstance(other, Response):
            return NotImplemented
        same = (self.id, self.status, self.reason) == (other.id, other.status, other.reason)
        same = same and _same(self.measured_f, other.measured_f)
        same = same and _same(self.measured_s, other.measured_s)
        if not same or (self.rho is None) != (other.rho is None):
            return False
        if self.rho is None:
            return True
        return self.rho.qubits == other.rho.qubits and np.array_equal(
            self.rho.data, other.rho.data
        )

    __hash__ = None


def _same(a, b):
    """Float equality that treats NaN as equal to itself."""
    return a == b or (a != a and b != b)


def _check_common(req, out):
    if not isinstance(req.id, int) or not 0 <= req.id <= U64_MAX:
        out.append(f"id {req.id!r} is not an unsigned 64-bit integer")
    if not 0.0 <= req.f_min <= 1.0:
        out.append(f"f_min {req.f_min!r} outside [0, 1]")
    if not req.s_max >= 0.0:
        out.append(f"s_max {req.s_max!r} is negative")
    if not req.targets:
        out.append("targets are empty")
    if len(set(req.targets)) != len(req.targets):
        out.append("targets are not distinct")
    for t in req.targets:
        if not valid_name(t.node):
            out.append(f"invalid node name {t.node!r}")
        if not 0 <= t.vaddr <= U64_MAX:
            out.append(f"virtual address {t.vaddr} out of range")
    if req.encoding not in ENCODINGS:
        out.append(f"UnsupportedEncoding: {req.encoding!r}")


def validate(request):
    """List of invariant violations; empty when the request is well formed."""
    out = []
    _check_common(request, out)
    declared = set(request.targets)
    if isinstance(request, StateRequest):
        spec = request.spec
        if spec.form == FANOUT:
            norm = abs(spec.alpha) ** 2 + abs(spec.beta) ** 2
            if abs(norm - 1) > NORM_TOL:
                out.append(f"fanout amplitudes not normalized (|a|^2+|b|^2 = {norm!r})")
        if spec.form == CIRCUIT:
            for g in spec.gates:
                for t in g.targets:
                    if t not in declared:
                        out.append(f"circuit gate {g.kind} references undeclared {t}")
        else:
            if spec.n < 1:
                out.append(f"spec qubit count {spec.n} must be positive")
            if spec.n != len(request.targets):
                out.append(
                    f"spec has {spec.n} qubit(s) but {len(request.targets)} target(s)"
                )
    elif isinstance(request, ActionRequest):
        for op in request.circuit:
            if op.kind not in ActionOp.ARITY:
                out.append(f"unknown action op {op.kind!r}")
                continue
            if len(op.targets) != ActionOp.ARITY[op.kind]:
                out.append(f"{op.kind} takes {ActionOp.ARITY[op.kind]} operand(s)")
            for t in op.targets:
                if t not in declared:
                    out.append(f"action {op.kind} references unlisted {t}")
    else:
        out.append(f"not a request: {type(request).__name__}")
    return out


def check_response(rho, request):
    """Score a delivered state against the request's constraints."""
    n = len(request.targets)
    if rho.n_qubits != n:
        raise ShapeError(f"state has {rho.n_qubits} qubit(s), request has {n} target(s)")
    psi = target_state(request.spec, request.targets)
    f = dm.fidelity(rho, psi)
    s = dm.entropy(rho)
    ok = f >= request.f_min and s <= request.s_max
    return Response(request.id, OK if ok else CONSTRAINT_VIOLATION, f, s, rho)


# -- virtual -> physical binding --------------------------------------------------

class VirtualMap:
    """One node's private mapping from virtual ids to its physical slots."""

    def __init__(self, owner):
        self.owner = owner
        self._slot_of = {}
        self._id_of = {}

    def __len__(self):
        return len(self._slot_of)

    def __contains__(self, vid):
        return vid in self._slot_of

    def items(self):
        return sorted(self._slot_of.items())

    def _own(self, slot):
        if slot.register_id != self.owner:
            raise SlotBusy(f"slot {slot.label} is not owned by {self.owner}")

    def bind(self, vid, slot):
        self._own(slot)
        if vid in self._slot_of:
            raise DoubleBind(f"{vid} is already bound at {self.owner}")
        if slot in self._id_of:
            raise SlotBusy(f"slot {slot.label} already holds {self._id_of[slot]}")
        self._slot_of[vid] = slot
        self._id_of[slot] = vid

    def resolve(self, vid):
        try:
            return self._slot_of[vid]
        except KeyError:
            raise UnknownAddress(f"{vid} is not bound at {self.owner}") from None

    def holder(self, slot):
        return self._id_of.get(slot)

    def rebind(self, vid, new_slot):
        old = self.resolve(vid)
        self._own(new_slot)
        if new_slot in self._id_of and new_slot != old:
            raise SlotBusy(f"slot {new_slot.label} already holds {self._id_of[new_slot]}")
        del self._id_of[old]
        self._slot_of[vid] = new_slot
        self._id_of[new_slot] = vid

    def release(self, vid):
        slot = self.resolve(vid)
        del self._slot_of[vid]
        del self._id_of[slot]
        return slot

    def is_injective(self):
        return len(self._slot_of) == len(self._id_of) and all(
            self._id_of[s] == v for v, s in self._slot_of.items()
        )


# -- wire encoding ----------------------------------------------------------------

def fmt_float(x):
    """Canonical decimal: 17 significant digits, exact round trip."""
    x = float(x)
    if x == 0.0:
        return "0" if np.copysign(1.0, x) > 0 else "-0"
    return format(x, ".17g")


def _fmt_addr(a):
    return f"{a.node}:{a.vaddr}"


def _fmt_gate(g):
    return f"{g.kind}({','.join(_fmt_addr(t) for t in g.targets)})"


def _fmt_spec(spec):
    if spec.form == CIRCUIT:
        return "circuit[" + ";".join(_fmt_gate(g) for g in spec.gates) + "]"
    if spec.form == BELL:
        return "bell"
    if spec.form == FANOUT:
        parts = [spec.alpha.real, spec.alpha.imag, spec.beta.real, spec.beta.imag]
        return "fanout(" + ",".join(fmt_float(p) for p in parts) + f",{spec.n})"
    return f"{spec.form}({spec.n})"


def encode(obj):
    """Canonical one-line text form of a request or response, as bytes."""
    if isinstance(obj, StateRequest):
        body = f"REQ {obj.id} STATE spec={_fmt_spec(obj.spec)}"
    elif isinstance(obj, ActionRequest):
        body = f"REQ {obj.id} ACTION circuit=[" + ";".join(
            _fmt_gate(op) for op in obj.circuit) + "]"
    elif isinstance(obj, Response):
        body = (f"RSP {obj.id} status={obj.status} f={fmt_float(obj.measured_f)} "
                f"s={fmt_float(obj.measured_s)}")
        if obj.reason:
            body += f" why={obj.reason}"
        if obj.rho is not None:
            order = ",".join(str(q) for q in obj.rho.qubits)
            cells = ",".join(
                f"{fmt_float(z.real)}:{fmt_float(z.imag)}" for z in obj.rho.data.ravel()
            )
            body += f" order=({order}) rho=[{cells}]"
        return body.encode("ascii")
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")
    targets = ",".join(_fmt_addr(t) for t in obj.targets)
    body += (f" fmin={fmt_float(obj.f_min)} smax={fmt_float(obj.s_max)} "
             f"targets=({targets}) enc={obj.encoding}")
    return body.encode("ascii")


class _Reader:
    """Cursor over an ASCII line; every failure reports its byte offset."""

    def __init__(self, text):
        self.s = text
        self.i = 0

    def fail(self, msg):
        raise ParseError(msg, offset=self.i)

    def peek(self, lit):
        return self.s.startswith(lit, self.i)

    def expect(self, lit):
        if not self.peek(lit):
            got = self.s[self.i:self.i + len(lit)] or "end of input"
            self.fail(f"expected {lit!r}, got {got!r}")
        self.i += len(lit)

    def match(self, pattern, what):
        m = re.compile(pattern).match(self.s, self.i)
        if not m:
            self.fail(f"expected {what}")
        self.i = m.end()
        return m.group(0)

    def name(self):
        return self.match(r"[A-Za-z_][A-Za-z0-9_\-]*", "a name")

    def uint(self):
        v = int(self.match(r"[0-9]+", "an unsigned integer"))
        if v > U64_MAX:
            self.fail("integer exceeds 64 bits")
        return v

    def float(self):
        tok = self.match(r"[-+]?(inf|nan|[0-9]+(\.[0-9]*)?([eE][-+]?[0-9]+)?)", "a number")
        return float(tok)

    def token(self):
        return self.match(r"[^\s]+", "a token")

    def end(self):
        if self.i != len(self.s):
            self.fail("trailing characters")

    def addr(self):
        node = self.name()
        self.expect(":")
        return QubitAddress(node, self.uint())

    def addr_list(self, open_, close):
        self.expect(open_)
        out = []
        if not self.peek(close):
            out.append(self.addr())
            while self.peek(","):
                self.expect(",")
                out.append(self.addr())
        self.expect(close)
        return out

    def gate(self, allowed):
        kind = self.match(r"[A-Z]+", "an operation name")
        if kind not in allowed:
            self.i -= len(kind)
            self.fail(f"unknown operation {kind!r}")
        start = self.i
        args = self.addr_list("(", ")")
        if len(args) != allowed[kind]:
            self.i = start
            self.fail(f"{kind} takes {allowed[kind]} operand(s), got {len(args)}")
        return kind, args

    def gate_list(self, allowed):
        self.expect("[")
        out = []
        if not self.peek("]"):
            out.append(self.gate(allowed))
            while self.peek(";"):
                self.expect(";")
                out.append(self.gate(allowed))
        self.expect("]")
        return out


def _parse_spec(r):
    if r.peek("circuit"):
        r.expect("circuit")
        start = r.i
        try:
            return StateSpec.circuit(GateOp(k, a) for k, a in r.gate_list(GATE_ARITY))
        except ValueError as exc:
            raise ParseError(str(exc), offset=start) from None
    if r.peek("bell"):
        r.expect("bell")
        return StateSpec.bell()
    if r.peek("fanout"):
        r.expect("fanout(")
        vals = [r.float()]
        for _ in range(3):
            r.expect(",")
            vals.append(r.float())
        r.expect(",")
        n = r.uint()
        r.expect(")")
        return StateSpec.fanout(complex(vals[0], vals[1]), complex(vals[2], vals[3]), n)
    for form in (GHZ, CLUSTER):
        if r.peek(form):
            r.expect(form + "(")
            n = r.uint()
            r.expect(")")
            return StateSpec(form, n=n)
    r.fail("unknown state spec")


def _parse_tail(r):
    r.expect(" fmin=")
    f_min = r.float()
    r.expect(" smax=")
    s_max = r.float()
    r.expect(" targets=")
    targets = r.addr_list("(", ")")
    r.expect(" enc=")
    enc = r.match(r"[A-Za-z0-9_]+", "an encoding name")
    return f_min, s_max, targets, enc


def decode(data):
    """Inverse of :func:`encode`; raises ParseError with a byte offset."""
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("ascii")
        except UnicodeDecodeError as exc:
            raise ParseError("non-ASCII byte", offset=exc.start) from None
    else:
        text = data
    r = _Reader(text)
    if r.peek("RSP "):
        r.expect("RSP ")
        rid = r.uint()
        r.expect(" status=")
        status = r.match(r"[A-Z_]+", "a status")
        if status not in STATUSES:
            r.i -= len(status)
            r.fail(f"unknown status {status!r}")
        r.expect(" f=")
        f = r.float()
        r.expect(" s=")
        s = r.float()
        reason = ""
        if r.peek(" why="):
            r.expect(" why=")
            reason = r.match(r"[A-Za-z0-9_\-.:/]+", "a reason token")
        rho = None
        if r.peek(" order="):
            r.expect(" order=(")
            labels = r.match(r"[^)]*", "qubit labels")
            r.expect(")")
            labels = tuple(labels.split(",")) if labels else ()
            r.expect(" rho=[")
            cells = []
            while True:
                re_ = r.float()
                r.expect(":")
                cells.append(complex(re_, r.float()))
                if r.peek(","):
                    r.expect(",")
                    continue
                break
            r.expect("]")
            dim = 2 ** len(labels)
            if len(cells) != dim * dim:
                r.fail(f"rho has {len(cells)} cells, expected {dim * dim}")
            rho = DensityMatrix(np.array(cells).reshape(dim, dim), labels)
        r.end()
        return Response(rid, status, f, s, rho, reason)
    r.expect("REQ ")
    rid = r.uint()
    if r.peek(" STATE"):
        r.expect(" STATE spec=")
        spec = _parse_spec(r)
        f_min, s_max, targets, enc = _parse_tail(r)
        r.end()
        return StateRequest(rid, spec, f_min, s_max, targets, enc)
    r.expect(" ACTION circuit=")
    ops = [ActionOp(k, a) for k, a in r.gate_list(ActionOp.ARITY)]
    f_min, s_max, targets, enc = _parse_tail(r)
    r.end()
    return ActionRequest(rid, ops, f_min, s_max, targets, enc)


__all__ = [
    "QubitAddress", "FullVirtualId", "QubitSlot", "StateSpec", "ActionOp",
    "StateRequest", "ActionRequest", "Response", "VirtualMap",
    "validate", "check_response", "target_state", "encode", "decode",
    "OK", "CONSTRAINT_VIOLATION", "FAIL",
]
