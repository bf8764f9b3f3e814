"""Exact dense density-matrix backend.

Every function here is a pure transformation: it takes a
:class:`DensityMatrix` and returns a new one.  Qubits are addressed by
hashable logical labels; ``qubits`` fixes the tensor-factor order
(first label is the most significant bit of the basis index).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AddressError, ImpossibleBranch, ResourceLimit, ShapeError

DEFAULT_QUBIT_CAP = 12

TRACE_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10

_S2 = 1 / np.sqrt(2)

GATES = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _S2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "T": np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex),
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
}
GATE_ARITY = {"H": 1, "X": 1, "Y": 1, "Z": 1, "S": 1, "T": 1, "CNOT": 2, "CZ": 2}

PAULIS = (GATES["X"], GATES["Y"], GATES["Z"])


@dataclass(frozen=True)
class QubitSlot:
    """A physical qubit position: ``index`` within register ``register_id``."""

    register_id: str
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"slot index must be non-negative, got {self.index}")

    @property
    def label(self):
        return f"{self.register_id}.{self.index}"


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple

    def __post_init__(self):
        if self.kind not in GATE_ARITY:
            raise ValueError(f"unknown gate {self.kind!r}")
        object.__setattr__(self, "targets", tuple(self.targets))
        if len(self.targets) != GATE_ARITY[self.kind]:
            raise ValueError(
                f"{self.kind} takes {GATE_ARITY[self.kind]} target(s), "
                f"got {len(self.targets)}"
            )
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"{self.kind} targets must be distinct")


@dataclass(frozen=True)
class NoiseChannel:
    """DEPOLARIZING(p) acts on one qubit; WERNER_SOURCE(F) replaces a pair."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind == "DEPOLARIZING":
            if not 0.0 <= self.param <= 1.0:
                raise ValueError(f"depolarizing p out of [0,1]: {self.param}")
        elif self.kind == "WERNER_SOURCE":
            if not 0.25 <= self.param <= 1.0:
                raise ValueError(f"Werner fidelity out of [1/4,1]: {self.param}")
        else:
            raise ValueError(f"unknown channel {self.kind!r}")

    @property
    def arity(self):
        return 1 if self.kind == "DEPOLARIZING" else 2

    @classmethod
    def depolarizing(cls, p):
        return cls("DEPOLARIZING", float(p))

    @classmethod
    def werner_source(cls, fidelity):
        return cls("WERNER_SOURCE", float(fidelity))


@dataclass
class DensityMatrix:
    data: np.ndarray
    qubits: tuple = field(default=())

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        self.qubits = tuple(self.qubits)
        n = len(self.qubits)
        if self.data.shape != (2**n, 2**n):
            raise ShapeError(
                f"matrix shape {self.data.shape} does not match {n} qubit(s)"
            )
        if len(set(self.qubits)) != n:
            raise AddressError(f"duplicate qubit labels in {self.qubits}")

    @property
    def n_qubits(self):
        return len(self.qubits)

    def index(self, qubit):
        try:
            return self.qubits.index(qubit)
        except ValueError:
            raise AddressError(f"qubit {qubit!r} not in {self.qubits}") from None

    def validate(self):
        """Raise ValueError unless trace, Hermiticity and PSD invariants hold."""
        tr = np.trace(self.data)
        if abs(tr - 1) > TRACE_TOL * max(1, self.data.shape[0]):
            raise ValueError(f"trace {tr} != 1")
        herm = np.max(np.abs(self.data - self.data.conj().T)) if self.n_qubits else 0.0
        if herm > HERMITIAN_TOL:
            raise ValueError(f"not Hermitian (deviation {herm:.3g})")
        lam = np.linalg.eigvalsh(self.data).min()
        if lam < -PSD_TOL:
            raise ValueError(f"negative eigenvalue {lam:.3g}")
        return self

    def __repr__(self):
        return f"DensityMatrix(qubits={self.qubits!r})"


# -- construction -----------------------------------------------------------

def new_register(n, labels=None, cap=DEFAULT_QUBIT_CAP):
    """|0...0><0...0| on ``n`` qubits."""
    if n < 1:
        raise ValueError("a register needs at least one qubit")
    if n > cap:
        raise ResourceLimit(f"{n} qubits exceeds the cap of {cap}")
    labels = tuple(range(n)) if labels is None else tuple(labels)
    if len(labels) != n:
        raise ShapeError(f"{len(labels)} labels for {n} qubits")
    data = np.zeros((2**n, 2**n), dtype=complex)
    data[0, 0] = 1.0
    return DensityMatrix(data, labels)


def from_pure(psi, labels=None):
    psi = np.asarray(psi, dtype=complex).ravel()
    n = int(round(np.log2(psi.size)))
    if 2**n != psi.size:
        raise ShapeError(f"state vector length {psi.size} is not a power of two")
    labels = tuple(range(n)) if labels is None else tuple(labels)
    return DensityMatrix(np.outer(psi, psi.conj()), labels)


def bell_vectors():
    """The Bell basis as a dict of 4-vectors."""
    return {
        "phi+": np.array([1, 0, 0, 1], dtype=complex) * _S2,
        "phi-": np.array([1, 0, 0, -1], dtype=complex) * _S2,
        "psi+": np.array([0, 1, 1, 0], dtype=complex) * _S2,
        "psi-": np.array([0, 1, -1, 0], dtype=complex) * _S2,
    }


PHI_PLUS = bell_vectors()["phi+"]


def werner(fidelity, labels=(0, 1)):
    """F |Phi+><Phi+| + (1-F)/3 (sum of the other three Bell projectors)."""
    bv = bell_vectors()
    rho = fidelity * np.outer(bv["phi+"], bv["phi+"].conj())
    for key in ("phi-", "psi+", "psi-"):
        rho = rho + (1 - fidelity) / 3 * np.outer(bv[key], bv[key].conj())
    return DensityMatrix(rho, labels)


# -- tensor-index helpers -----------------------------------------------------

def _apply_operator(rho, op, axes):
    """Return ``op rho op^dagger`` with ``op`` acting on tensor axes ``axes``."""
    n = rho.n_qubits
    k = len(axes)
    t = rho.data.reshape((2,) * (2 * n))
    u = op.reshape((2,) * (2 * k))
    ins = list(range(k, 2 * k))
    t = np.tensordot(u, t, axes=(ins, list(axes)))
    t = np.moveaxis(t, list(range(k)), list(axes))
    cols = [n + a for a in axes]
    t = np.tensordot(t, u.conj(), axes=(cols, ins))
    t = np.moveaxis(t, list(range(2 * n - k, 2 * n)), cols)
    return t.reshape(2**n, 2**n)


def _axes(rho, targets):
    axes = [rho.index(q) for q in targets]
    if len(set(axes)) != len(axes):
        raise AddressError(f"repeated target in {targets}")
    return axes


def apply_unitary(rho, u, targets):
    axes = _axes(rho, targets)
    if u.shape != (2 ** len(axes),) * 2:
        raise ShapeError(f"operator shape {u.shape} for {len(axes)} target(s)")
    return DensityMatrix(_apply_operator(rho, u, axes), rho.qubits)


def apply_gate(rho, gate):
    """U rho U^dagger for a gate from the fixed gate set."""
    return apply_unitary(rho, GATES[gate.kind], gate.targets)


def apply_kraus(rho, kraus_ops, targets):
    axes = _axes(rho, targets)
    out = np.zeros_like(rho.data)
    for k in kraus_ops:
        out += _apply_operator(rho, k, axes)
    return DensityMatrix(out, rho.qubits)


def apply_channel(rho, channel, targets):
    targets = tuple(targets)
    if len(targets) != channel.arity:
        raise AddressError(
            f"{channel.kind} acts on {channel.arity} qubit(s), got {len(targets)}"
        )
    if channel.kind == "DEPOLARIZING":
        p = channel.param
        axes = _axes(rho, targets)
        out = (1 - p) * rho.data
        for pauli in PAULIS:
            out = out + (p / 3) * _apply_operator(rho, pauli, axes)
        return DensityMatrix(out, rho.qubits)
    # WERNER_SOURCE: discard whatever the pair held and emit a Werner pair
    _axes(rho, targets)
    rest = [q for q in rho.qubits if q not in targets]
    src = werner(channel.param, targets)
    if not rest:
        return reorder(src, rho.qubits)
    return reorder(tensor(partial_trace(rho, rest), src), rho.qubits)


# -- measurement --------------------------------------------------------------

def branch_probabilities(rho, qubit):
    """(P(0), P(1)) for a computational-basis measurement of ``qubit``."""
    ax = rho.index(qubit)
    n = rho.n_qubits
    diag = np.real(np.diag(rho.data)).reshape((2,) * n)
    p1 = float(np.sum(np.take(diag, 1, axis=ax)))
    p0 = float(np.sum(np.take(diag, 0, axis=ax)))
    return p0, p1


def measure_z(rho, qubit, rng=None, outcome=None):
    """Projective Z measurement.

    With ``outcome`` given the matching branch is returned (for branch
    enumeration); otherwise the outcome is drawn from ``rng``.  Returns
    ``(outcome, probability, post_state)``; the measured qubit stays in the
    post-state, collapsed.
    """
    p0, p1 = branch_probabilities(rho, qubit)
    if outcome is None:
        if rng is None:
            raise ValueError("need either rng or a forced outcome")
        outcome = 0 if rng.random() < p0 else 1
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
    prob = p0 if outcome == 0 else p1
    if prob < 1e-15:
        raise ImpossibleBranch(f"outcome {outcome} on {qubit!r} has probability {prob:.3g}")
    proj = np.zeros((2, 2), dtype=complex)
    proj[outcome, outcome] = 1.0
    post = _apply_operator(rho, proj, [rho.index(qubit)]) / prob
    return outcome, prob, DensityMatrix(post, rho.qubits)


# -- composition ----------------------------------------------------------------

def tensor(rho1, rho2):
    clash = set(rho1.qubits) & set(rho2.qubits)
    if clash:
        raise AddressError(f"qubits {sorted(map(str, clash))} appear in both factors")
    return DensityMatrix(np.kron(rho1.data, rho2.data), rho1.qubits + rho2.qubits)


def partial_trace(rho, keep):
    """Reduced state on ``keep``; the result follows ``rho``'s qubit order."""
    keep = set(keep)
    if not keep:
        raise AddressError("partial_trace needs at least one qubit to keep")
    missing = keep - set(rho.qubits)
    if missing:
        raise AddressError(f"unknown qubits {sorted(map(str, missing))}")
    n = rho.n_qubits
    kept = [i for i, q in enumerate(rho.qubits) if q in keep]
    gone = [i for i in range(n) if i not in kept]
    if not gone:
        return DensityMatrix(rho.data.copy(), rho.qubits)
    t = rho.data.reshape((2,) * (2 * n))
    order = kept + gone + [n + i for i in kept] + [n + i for i in gone]
    dk, dg = 2 ** len(kept), 2 ** len(gone)
    t = t.transpose(order).reshape(dk, dg, dk, dg)
    red = np.trace(t, axis1=1, axis2=3)
    return DensityMatrix(red, tuple(rho.qubits[i] for i in kept))


def discard(rho, qubit):
    return partial_trace(rho, [q for q in rho.qubits if q != qubit])


def reorder(rho, order):
    """Permute tensor factors so that ``rho.qubits == tuple(order)``."""
    order = tuple(order)
    if set(order) != set(rho.qubits) or len(order) != rho.n_qubits:
        raise AddressError(f"{order} is not a permutation of {rho.qubits}")
    if order == rho.qubits:
        return rho
    n = rho.n_qubits
    perm = [rho.index(q) for q in order]
    t = rho.data.reshape((2,) * (2 * n)).transpose(perm + [n + p for p in perm])
    return DensityMatrix(t.reshape(2**n, 2**n), order)


# -- figures of merit -----------------------------------------------------------

def fidelity(rho, target):
    """<psi|rho|psi> for a normalized pure ``target`` vector."""
    psi = np.asarray(target, dtype=complex).ravel()
    if psi.size != rho.data.shape[0]:
        raise ShapeError(f"target has {psi.size} amplitudes, state has {rho.data.shape[0]}")
    norm = np.vdot(psi, psi).real
    if abs(norm - 1) > 1e-12:
        raise ShapeError(f"target not normalized (|psi|^2 = {norm!r})")
    val = np.vdot(psi, rho.data @ psi)
    if abs(val.imag) > 1e-12:
        raise ValueError(f"fidelity has imaginary part {val.imag:.3g}")
    return float(min(1.0, max(0.0, val.real)))


def entropy(rho):
    """von Neumann entropy in bits."""
    lam = np.linalg.eigvalsh(rho.data)
    lam = np.where((lam < 0) & (lam >= -PSD_TOL), 0.0, lam)
    lam = lam[lam > 0]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


def trace_distance(rho, sigma):
    """0.5 * ||rho - sigma||_1 over matching qubit labels."""
    if set(rho.qubits) != set(sigma.qubits) or rho.n_qubits != sigma.n_qubits:
        raise AddressError(f"{rho.qubits} vs {sigma.qubits}")
    sigma = reorder(sigma, rho.qubits)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho.data - sigma.data))))
