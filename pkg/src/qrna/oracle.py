"""Independent flat replay of recorded physical operations.

The engine keeps its quantum state in per-block density matrices built on
:mod:`qrna.density`.  This module shares none of that code: it holds one
flat register, lifts every gate to a full sparse operator with
``scipy.sparse.kron`` and does its own partial traces.  Feeding it the op
log from a trace gives a second opinion on every state the engine reports.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ImpossibleBranch, ResourceLimit
from .requests import BELL, CIRCUIT, CLUSTER, FANOUT, GHZ, StateRequest, decode
from .trace import parse_trace

ORACLE_CAP = 12

_S2 = 1 / np.sqrt(2)
_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_P0 = np.array([[1, 0], [0, 0]], dtype=complex)
_P1 = np.array([[0, 0], [0, 1]], dtype=complex)

SINGLE = {
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "X": _X,
    "Y": _Y,
    "Z": _Z,
    "S": np.diag([1, 1j]),
    "T": np.diag([1, np.exp(1j * np.pi / 4)]),
}
# controlled gates: (projector on control) x (action on target)
CONTROLLED = {"CNOT": _X, "CZ": _Z}


def _embed(n, factors):
    """Sparse kron of per-position 2x2 factors, identity elsewhere."""
    out = sparse.identity(1, dtype=complex, format="csr")
    for i in range(n):
        out = sparse.kron(out, sparse.csr_matrix(factors.get(i, _I)), format="csr")
    return out


def gate_operator(kind, positions, n):
    """Full 2^n x 2^n operator of a named gate; position 0 is most significant."""
    if kind in SINGLE:
        (q,) = positions
        return _embed(n, {q: SINGLE[kind]})
    if kind in CONTROLLED:
        c, t = positions
        return _embed(n, {c: _P0}) + _embed(n, {c: _P1, t: CONTROLLED[kind]})
    raise ValueError(f"oracle does not know gate {kind!r}")


def ptrace(rho, n, keep):
    """Reduced state on positions ``keep`` (in that order)."""
    keep = list(keep)
    drop = [i for i in range(n) if i not in keep]
    t = rho.reshape((2,) * (2 * n))
    # bring kept rows then dropped rows, same for columns
    t = t.transpose(keep + drop + [n + i for i in keep] + [n + i for i in drop])
    k, d = 2 ** len(keep), 2 ** len(drop)
    t = t.reshape(k, d, k, d)
    return np.trace(t, axis1=1, axis2=3)


def werner_matrix(f):
    phi_p = np.array([1, 0, 0, 1]) * _S2
    phi_m = np.array([1, 0, 0, -1]) * _S2
    psi_p = np.array([0, 1, 1, 0]) * _S2
    psi_m = np.array([0, 1, -1, 0]) * _S2
    rho = f * np.outer(phi_p, phi_p)
    for v in (phi_m, psi_p, psi_m):
        rho = rho + (1 - f) / 3 * np.outer(v, v)
    return rho.astype(complex)


def entropy_bits(rho):
    w = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    w = w[w > 1e-12]
    return float(max(0.0, -np.sum(w * np.log2(w))))


def target_vector(spec, n_targets, addresses=None):
    """Pure target state built by statevector simulation."""
    n = n_targets if spec.form == CIRCUIT else spec.n
    if spec.form in (BELL, GHZ, FANOUT):
        a, b = (spec.alpha, spec.beta) if spec.form == FANOUT else (_S2, _S2)
        psi = np.zeros(2**n, dtype=complex)
        psi[0] += a
        psi[-1] += b
        return psi
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    if spec.form == CLUSTER:
        seq = [("H", [i]) for i in range(n)] + [("CZ", [i, i + 1]) for i in range(n - 1)]
    else:
        pos = {a: i for i, a in enumerate(addresses)}
        seq = [(g.kind, [pos[t] for t in g.targets]) for g in spec.gates]
    for kind, qs in seq:
        psi = gate_operator(kind, qs, n) @ psi
    return psi


@dataclass
class Branch:
    label: str
    p0: float
    p1: float
    outcome: int


@dataclass
class Delivery:
    """Oracle view of one root response."""

    request: int
    status: str
    reported_f: float
    reported_s: float
    labels: list
    rho: np.ndarray
    f: float | None = None
    s: float | None = None


@dataclass
class FlatRegister:
    """Single dense register addressed by qubit label."""

    cap: int = ORACLE_CAP
    labels: list = field(default_factory=list)
    rho: np.ndarray = field(default_factory=lambda: np.ones((1, 1), dtype=complex))
    branches: list = field(default_factory=list)
    peak: int = 0

    @property
    def n(self):
        return len(self.labels)

    def _pos(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"qubit {label!r} is not live in the oracle register") from None

    def _append(self, labels, block):
        if self.n + len(labels) > self.cap:
            raise ResourceLimit(f"oracle register would hold {self.n + len(labels)} qubits "
                                f"(cap {self.cap})")
        self.rho = np.kron(self.rho, block)
        self.labels += list(labels)
        self.peak = max(self.peak, self.n)

    def _remove(self, labels):
        pos = [self._pos(q) for q in labels]
        keep = [i for i in range(self.n) if i not in pos]
        self.rho = ptrace(self.rho, self.n, keep)
        self.labels = [self.labels[i] for i in keep]

    def init(self, label):
        if label in self.labels:
            raise ValueError(f"qubit {label!r} initialised twice")
        self._append([label], _P0)

    def free(self, label):
        self._remove([label])

    def gate(self, kind, labels):
        u = gate_operator(kind, [self._pos(q) for q in labels], self.n)
        self.rho = (u @ sparse.csr_matrix(self.rho) @ u.conj().T).toarray()

    def depolarize(self, p, label):
        q = self._pos(label)
        out = (1 - p) * self.rho
        for pauli in (_X, _Y, _Z):
            k = _embed(self.n, {q: pauli})
            out = out + p / 3 * (k @ sparse.csr_matrix(self.rho) @ k.conj().T).toarray()
        self.rho = out

    def replace(self, labels, block):
        self._remove(labels)
        self._append(labels, block)

    def measure(self, label, outcome):
        q = self._pos(label)
        probs = []
        for proj in (_P0, _P1):
            m = _embed(self.n, {q: proj})
            probs.append(float(np.real((m @ sparse.csr_matrix(self.rho)).diagonal().sum())))
        if abs(probs[0] + probs[1] - 1) > 1e-9:
            raise ValueError(f"branch probabilities sum to {probs[0] + probs[1]}")
        p = probs[outcome]
        if p < 1e-15:
            raise ImpossibleBranch(f"outcome {outcome} on {label} has probability {p}")
        m = _embed(self.n, {q: _P1 if outcome else _P0})
        self.rho = (m @ sparse.csr_matrix(self.rho) @ m).toarray() / p
        self.branches.append(Branch(label, probs[0], probs[1], outcome))

    def reduced(self, labels):
        return ptrace(self.rho, self.n, [self._pos(q) for q in labels])

    def apply(self, op):
        """Apply one op-log entry such as ``GATE CNOT Node19.0 Node19.1``."""
        w = op.split()
        head = w[0]
        if head == "INIT":
            self.init(w[1])
        elif head == "FREE":
            self.free(w[1])
        elif head == "GATE":
            self.gate(w[1], w[2:])
        elif head == "DEP":
            self.depolarize(float(w[1]), w[2])
        elif head == "WERNER":
            self.replace(w[2:4], werner_matrix(float(w[1])))
        elif head == "PREP":
            ar, ai, br, bi = (float(x) for x in w[1:5])
            v = np.array([complex(ar, ai), complex(br, bi)])
            self.replace([w[5]], np.outer(v, v.conj()))
        elif head == "MEAS":
            self.measure(w[1], int(w[2]))
        else:
            raise ValueError(f"unknown op {head!r}")


def replay(trace_text, cap=ORACLE_CAP):
    """Replay every op of a trace; returns (register, deliveries).

    A delivery is recorded at each root response that names its qubits,
    scored against the target decoded from the matching request event.
    """
    reg = FlatRegister(cap=cap)
    requests = {}
    out = []
    for ev in parse_trace(trace_text):
        for op in ev.ops:
            reg.apply(op)
        if ev.kind == "REQ_RECV" and "wire" in ev.detail:
            requests.setdefault(ev.request, decode(ev.detail["wire"]))
        if ev.kind == "RSP" and ev.detail.get("root") == "1" and ev.detail.get("qubits"):
            labels = ev.detail["qubits"].split(";")
            d = Delivery(ev.request, ev.detail["status"], float(ev.detail["f"]),
                         float(ev.detail["s"]), labels, reg.reduced(labels))
            req = requests.get(ev.request)
            if isinstance(req, StateRequest):
                psi = target_vector(req.spec, len(req.targets), req.targets)
                d.f = float(np.clip(np.real(psi.conj() @ d.rho @ psi), 0.0, 1.0))
                d.s = entropy_bits(d.rho)
            out.append(d)
    return reg, out


# -- closed-circuit oracles for single link-layer steps -------------------------


def _run(ops, cap=ORACLE_CAP):
    reg = FlatRegister(cap=cap)
    for op in ops:
        reg.apply(op)
    return reg


def _num(x):
    return repr(float(x))


def _two_qubit_noise(p_gate, a, b):
    return [f"DEP {_num(p_gate)} {a}", f"DEP {_num(p_gate)} {b}"] if p_gate else []


def purification_branches(f1, f2, p_gate=0.0):
    """Exhaustive outcomes of one bilateral-CNOT round on Werner inputs.

    Returns {(m_a, m_b): (probability, fidelity of the kept pair)} over
    the four sacrifice-pair outcomes.  Kept pair is (A.0, B.0).
    """
    prep = ["INIT A.0", "INIT B.0", "INIT A.1", "INIT B.1",
            f"WERNER {_num(f1)} A.0 B.0", f"WERNER {_num(f2)} A.1 B.1",
            "GATE CNOT A.0 A.1", *_two_qubit_noise(p_gate, "A.0", "A.1"),
            "GATE CNOT B.0 B.1", *_two_qubit_noise(p_gate, "B.0", "B.1")]
    base = _run(prep)
    phi = np.array([1, 0, 0, 1]) * _S2
    out = {}
    for ma in (0, 1):
        for mb in (0, 1):
            reg = FlatRegister(labels=list(base.labels), rho=base.rho.copy())
            p = 1.0
            try:
                reg.measure("A.1", ma)
                p *= reg.branches[-1].p1 if ma else reg.branches[-1].p0
                reg.measure("B.1", mb)
                p *= reg.branches[-1].p1 if mb else reg.branches[-1].p0
            except ImpossibleBranch:
                out[(ma, mb)] = (0.0, float("nan"))
                continue
            rho = reg.reduced(["A.0", "B.0"])
            out[(ma, mb)] = (p, float(np.real(phi @ rho @ phi)))
    return out


def purification_oracle(f1, f2=None, p_gate=0.0):
    """(success probability, fidelity on success) of one purification round."""
    f2 = f1 if f2 is None else f2
    br = purification_branches(f1, f2, p_gate)
    p_ok = br[(0, 0)][0] + br[(1, 1)][0]
    f_ok = (br[(0, 0)][0] * br[(0, 0)][1] + br[(1, 1)][0] * br[(1, 1)][1]) / p_ok
    return p_ok, f_ok


def _bsm_branches(prep, q1, q2, far, keep, p_gate, target):
    """Average fidelity over the four Bell-measurement outcomes after corrections."""
    base = _run(prep + [f"GATE CNOT {q1} {q2}", *_two_qubit_noise(p_gate, q1, q2),
                        f"GATE H {q1}"])
    total_p, total_f = 0.0, 0.0
    for m1 in (0, 1):
        for m2 in (0, 1):
            reg = FlatRegister(labels=list(base.labels), rho=base.rho.copy())
            try:
                reg.measure(q1, m1)
                reg.measure(q2, m2)
            except ImpossibleBranch:
                continue
            p = ((reg.branches[0].p1 if m1 else reg.branches[0].p0)
                 * (reg.branches[1].p1 if m2 else reg.branches[1].p0))
            if m2:
                reg.gate("X", [far])
            if m1:
                reg.gate("Z", [far])
            rho = reg.reduced(keep)
            total_p += p
            total_f += p * float(np.real(target.conj() @ rho @ target))
    return total_p, total_f


def swap_oracle(f1, f2, p_gate=0.0):
    """Fidelity of the A-C pair after swapping Werner(f1) on A-B and Werner(f2) on B-C."""
    prep = ["INIT A.0", "INIT B.0", "INIT B.1", "INIT C.0",
            f"WERNER {_num(f1)} A.0 B.0", f"WERNER {_num(f2)} B.1 C.0"]
    phi = np.array([1, 0, 0, 1]) * _S2
    total_p, total_f = _bsm_branches(prep, "B.0", "B.1", "C.0", ["A.0", "C.0"],
                                     p_gate, phi)
    return total_f / total_p


def teleport_oracle(alpha, beta, f, p_gate=0.0):
    """Average fidelity of teleporting alpha|0>+beta|1> over a Werner(f) channel."""
    alpha, beta = complex(alpha), complex(beta)
    prep = ["INIT A.0", "INIT A.1", "INIT B.0",
            f"PREP {_num(alpha.real)} {_num(alpha.imag)} {_num(beta.real)} {_num(beta.imag)} A.0",
            f"WERNER {_num(f)} A.1 B.0"]
    psi = np.array([alpha, beta], dtype=complex)
    total_p, total_f = _bsm_branches(prep, "A.0", "A.1", "B.0", ["B.0"], p_gate, psi)
    return total_f / total_p


def purify_states(rho1, rho2, basis="Z", p_gate=0.0):
    """Success branches of one round on arbitrary two-qubit inputs.

    Returns {(m, m): (probability, kept-pair density matrix)}.
    """
    reg = _run(["INIT A.0", "INIT B.0", "INIT A.1", "INIT B.1"])
    reg.replace(["A.0", "B.0"], rho1)
    reg.replace(["A.1", "B.1"], rho2)
    if basis == "X":
        for q in ("A.0", "A.1", "B.0", "B.1"):
            reg.gate("H", [q])
    for op in ["GATE CNOT A.0 A.1", *_two_qubit_noise(p_gate, "A.0", "A.1"),
               "GATE CNOT B.0 B.1", *_two_qubit_noise(p_gate, "B.0", "B.1")]:
        reg.apply(op)
    out = {}
    for m in (0, 1):
        br = FlatRegister(labels=list(reg.labels), rho=reg.rho.copy())
        try:
            br.measure("A.1", m)
            br.measure("B.1", m)
        except ImpossibleBranch:
            continue
        p = ((br.branches[0].p1 if m else br.branches[0].p0)
             * (br.branches[1].p1 if m else br.branches[1].p0))
        out[(m, m)] = (p, br.reduced(["A.0", "B.0"]))
    return out


def recurrence_reachable(f_link, rounds, p_gate=0.0):
    """Best link fidelity after each symmetric round, over all success branches.

    Level ``k`` pairs are built from two level ``k-1`` pairs, checking
    parity in the Z basis on even levels and the X basis on odd ones.
    Entry ``k`` of the result is the highest fidelity any branch history
    reaches after ``k`` rounds.
    """
    phi = np.array([1, 0, 0, 1]) * _S2
    states = {None: werner_matrix(f_link)}
    best = [float(f_link)]
    for level in range(rounds):
        basis = "Z" if level % 2 == 0 else "X"
        nxt = {}
        pool = list(states.values())
        for i, r1 in enumerate(pool):
            for r2 in pool[i:]:
                for _, rho in purify_states(r1, r2, basis, p_gate).values():
                    nxt.setdefault(np.round(rho, 12).tobytes(), rho)
        states = nxt
        best.append(max(float(np.real(phi @ r @ phi)) for r in states.values()))
    return best
