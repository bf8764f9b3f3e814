"""Purify-and-swap primitives on top of a shared quantum state store.

The store keeps the global quantum state as independent blocks (one
density matrix per group of qubits that have interacted) so that unrelated
pairs never inflate each other's matrices.  Every physical operation is
appended to ``store.ops`` as a short text record; the engine drains these
into the trace, and the flat oracle replays them.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import density as dm
from .density import GateOp, NoiseChannel, QubitSlot
from .errors import (
    GenerationFailed,
    LoccViolation,
    MismatchedEndpoints,
    NoCommonNode,
    PurificationFailed,
    ResourceLimit,
)
from .requests import FullVirtualId, VirtualMap, fmt_float


class QuantumStore:
    """Global quantum state plus per-node slot bookkeeping."""

    def __init__(self, rng=None, p_gate=0.0, cap=dm.DEFAULT_QUBIT_CAP, check_invariants=False):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.p_gate = p_gate
        self.cap = cap
        self.check_invariants = check_invariants
        self.invariant_checks = 0
        self.blocks = {}
        self.block_of = {}
        self.maps = {}
        self.ops = []
        self.branches = []
        self.forced = deque()
        self._next_block = 0

    # -- slots and names ---------------------------------------------------

    def vmap(self, node):
        if node not in self.maps:
            self.maps[node] = VirtualMap(node)
        return self.maps[node]

    def _free_slot(self, node):
        used = {s.index for _, s in self.vmap(node).items()}
        i = 0
        while i in used:
            i += 1
        return QubitSlot(node, i)

    def label(self, node, vid):
        return self.vmap(node).resolve(vid).label

    def alloc(self, node, vid):
        """Bind ``vid`` to a fresh |0> qubit at ``node``; returns its label."""
        slot = self._free_slot(node)
        self.vmap(node).bind(vid, slot)
        b = self._next_block
        self._next_block += 1
        self.blocks[b] = dm.new_register(1, [slot.label])
        self.block_of[slot.label] = b
        self.ops.append(f"INIT {slot.label}")
        return slot.label

    def free(self, node, vid):
        slot = self.vmap(node).release(vid)
        q = slot.label
        b = self.block_of.pop(q)
        rho = self.blocks[b]
        if rho.n_qubits == 1:
            del self.blocks[b]
        else:
            self.blocks[b] = self._checked(dm.discard(rho, q))
        self.ops.append(f"FREE {q}")

    def rename(self, node, old, new):
        """Give the qubit held under ``old`` the virtual id ``new``."""
        vm = self.vmap(node)
        slot = vm.release(old)
        vm.bind(new, slot)

    def bound(self):
        return {n: vm.items() for n, vm in self.maps.items() if len(vm)}

    def live_qubits(self):
        return sorted(self.block_of)

    # -- state access --------------------------------------------------------

    def _checked(self, rho):
        if self.check_invariants:
            rho.validate()
            self.invariant_checks += 1
        return rho

    def _merge(self, labels):
        ids = []
        for q in labels:
            b = self.block_of[q]
            if b not in ids:
                ids.append(b)
        if len(ids) == 1:
            return ids[0]
        total = sum(self.blocks[b].n_qubits for b in ids)
        if total > self.cap:
            raise ResourceLimit(f"merged state would hold {total} qubits (cap {self.cap})")
        rho = self.blocks.pop(ids[0])
        for b in ids[1:]:
            rho = dm.tensor(rho, self.blocks.pop(b))
        for q in rho.qubits:
            self.block_of[q] = ids[0]
        self.blocks[ids[0]] = rho
        return ids[0]

    def state(self, labels):
        """Reduced state of ``labels``, in that order."""
        labels = list(labels)
        groups = {}
        for q in labels:
            groups.setdefault(self.block_of[q], []).append(q)
        rho = None
        for b, qs in groups.items():
            part = dm.partial_trace(self.blocks[b], qs)
            rho = part if rho is None else dm.tensor(rho, part)
        return self._checked(dm.reorder(rho, labels))

    # -- physical operations ---------------------------------------------------

    def gate(self, kind, labels):
        labels = list(labels)
        nodes = {q.rsplit(".", 1)[0] for q in labels}
        if len(nodes) > 1:
            raise LoccViolation(f"{kind} on {labels} spans nodes {sorted(nodes)}")
        b = self._merge(labels)
        rho = dm.apply_gate(self.blocks[b], GateOp(kind, labels))
        self.ops.append(f"GATE {kind} {' '.join(labels)}")
        self.blocks[b] = self._checked(rho)
        if len(labels) == 2 and self.p_gate > 0:
            for q in labels:
                self.depolarize(q, self.p_gate)

    def depolarize(self, label, p):
        b = self.block_of[label]
        rho = dm.apply_channel(self.blocks[b], NoiseChannel.depolarizing(p), [label])
        self.ops.append(f"DEP {fmt_float(p)} {label}")
        self.blocks[b] = self._checked(rho)

    def werner_source(self, qa, qb, f_link):
        b = self._merge([qa, qb])
        rho = dm.apply_channel(self.blocks[b], NoiseChannel.werner_source(f_link), [qa, qb])
        self.ops.append(f"WERNER {fmt_float(f_link)} {qa} {qb}")
        self.blocks[b] = self._checked(rho)

    def prepare(self, label, alpha, beta):
        """Reset one qubit to alpha|0> + beta|1>."""
        b = self.block_of[label]
        rho = self.blocks[b]
        fresh = dm.from_pure([alpha, beta], [label])
        rest = [q for q in rho.qubits if q != label]
        new = dm.tensor(dm.partial_trace(rho, rest), fresh) if rest else fresh
        self.blocks[b] = self._checked(dm.reorder(new, rho.qubits))
        parts = [alpha.real, alpha.imag, beta.real, beta.imag]
        self.ops.append(f"PREP {' '.join(fmt_float(x) for x in parts)} {label}")

    def measure(self, label):
        """Z-measure ``label``; a queued forced outcome takes precedence."""
        b = self.block_of[label]
        rho = self.blocks[b]
        p0, p1 = dm.branch_probabilities(rho, label)
        forced = self.forced.popleft() if self.forced else None
        outcome, prob, post = dm.measure_z(rho, label, rng=self.rng, outcome=forced)
        self.blocks[b] = self._checked(post)
        self.branches.append((label, p0, p1, outcome))
        self.ops.append(f"MEAS {label} {outcome}")
        return outcome

    def take_ops(self):
        ops, self.ops = self.ops, []
        return ops


@dataclass
class EntangledPairHandle:
    a: FullVirtualId
    node_a: str
    b: FullVirtualId
    node_b: str
    pedigree: str
    nominal_f: float
    level: int = 0
    success_probability: float | None = None

    def flipped(self):
        return replace(self, a=self.b, node_a=self.node_b, b=self.a, node_b=self.node_a)

    @property
    def nodes(self):
        return (self.node_a, self.node_b)


def _pair_fidelity(store, pair):
    rho = store.state([store.label(pair.node_a, pair.a), store.label(pair.node_b, pair.b)])
    return dm.fidelity(rho, dm.PHI_PLUS)


class LinkLayer:
    """Pair generation, purification, swapping and teleportation.

    ``emit(kind, node, **detail)`` receives one call per protocol step;
    physical ops accumulated in the store are attached by the caller.
    """

    def __init__(self, store, emit=None, stochastic=False):
        self.store = store
        self.emit = emit or (lambda kind, node, **kw: store.take_ops())
        self.stochastic = stochastic
        self.stats = dict(pairs=0, gen_failures=0, purify_attempts=0,
                          purify_successes=0, swaps=0, teleports=0)
        self._vaddr = {}

    def fresh_id(self, ns):
        n = self._vaddr.get(ns, 0)
        self._vaddr[ns] = n + 1
        return FullVirtualId(ns[0], ns[1], n)

    def generate_pair(self, link, ns, a=None, b=None):
        """Werner(f_link) pair across ``link``; stochastic mode may fail."""
        a = a or link.a
        b = b or link.other(a)
        if self.stochastic and not self.store.rng.random() < link.p_gen:
            self.stats["gen_failures"] += 1
            self.emit("PAIR_GEN", a, peer=b, ok=0)
            raise GenerationFailed(f"pair generation on {a}-{b} failed")
        va, vb = self.fresh_id(ns), self.fresh_id(ns)
        qa = self.store.alloc(a, va)
        qb = self.store.alloc(b, vb)
        self.store.werner_source(qa, qb, link.f_link)
        pair = EntangledPairHandle(va, a, vb, b, f"link:{a}-{b}", 0.0)
        pair.nominal_f = _pair_fidelity(self.store, pair)
        self.stats["pairs"] += 1
        self.emit("PAIR_GEN", a, peer=b, ok=1, f=pair.nominal_f)
        return pair

    def _bsm(self, q1, q2):
        """Bell-basis measurement: CNOT, H, then Z on both qubits."""
        st = self.store
        st.gate("CNOT", [q1, q2])
        st.gate("H", [q1])
        m1 = st.measure(q1)
        m2 = st.measure(q2)
        return m1, m2

    def _correct(self, q, m1, m2):
        if m2:
            self.store.gate("X", [q])
        if m1:
            self.store.gate("Z", [q])

    def purify(self, keep, sacrifice, basis="Z"):
        """Bilateral-CNOT recurrence step; keeps ``keep`` on matching parities.

        ``basis="X"`` conjugates both pairs by H on every qubit first, so the
        parity check catches phase errors instead of bit errors.  Alternating
        the basis between rounds stops phase errors from accumulating.
        """
        if sacrifice.nodes == keep.nodes[::-1]:
            sacrifice = sacrifice.flipped()
        if sacrifice.nodes != keep.nodes:
            raise MismatchedEndpoints(f"{keep.nodes} vs {sacrifice.nodes}")
        st = self.store
        ka, kb = st.label(keep.node_a, keep.a), st.label(keep.node_b, keep.b)
        sa, sb = st.label(sacrifice.node_a, sacrifice.a), st.label(sacrifice.node_b, sacrifice.b)
        self.stats["purify_attempts"] += 1
        if basis == "X":
            for q in (ka, sa, kb, sb):
                st.gate("H", [q])
        elif basis != "Z":
            raise ValueError(f"basis must be 'Z' or 'X', got {basis!r}")
        st.gate("CNOT", [ka, sa])
        st.gate("CNOT", [kb, sb])
        marg = st.state([sa, sb]).data.real
        p_success = float(marg[0, 0] + marg[3, 3])
        ma = st.measure(sa)
        mb = st.measure(sb)
        st.free(sacrifice.node_a, sacrifice.a)
        st.free(sacrifice.node_b, sacrifice.b)
        ok = ma == mb
        self.emit("MSG", keep.node_a, to=keep.node_b, bits=str(ma))
        self.emit("MSG", keep.node_b, to=keep.node_a, bits=str(mb))
        if not ok:
            st.free(keep.node_a, keep.a)
            st.free(keep.node_b, keep.b)
            self.emit("PURIFY", keep.node_a, peer=keep.node_b, ok=0, p=p_success)
            exc = PurificationFailed(f"parity mismatch on {keep.node_a}-{keep.node_b}")
            exc.success_probability = p_success
            raise exc
        self.stats["purify_successes"] += 1
        out = replace(keep, pedigree=f"purify({keep.pedigree},{sacrifice.pedigree})",
                      level=max(keep.level, sacrifice.level) + 1,
                      success_probability=p_success)
        out.nominal_f = _pair_fidelity(st, out)
        self.emit("PURIFY", keep.node_a, peer=keep.node_b, ok=1, p=p_success, f=out.nominal_f)
        return out

    def swap(self, left, right):
        """Join pairs A-B and B-C into A-C with a Bell measurement at B."""
        common = set(left.nodes) & set(right.nodes)
        if len(common) != 1 or left.node_a == left.node_b:
            raise NoCommonNode(f"{left.nodes} and {right.nodes} share no single node")
        mid = common.pop()
        if left.node_b != mid:
            left = left.flipped()
        if right.node_a != mid:
            right = right.flipped()
        st = self.store
        b1, b2 = st.label(mid, left.b), st.label(mid, right.a)
        c = st.label(right.node_b, right.b)
        m1, m2 = self._bsm(b1, b2)
        st.free(mid, left.b)
        st.free(mid, right.a)
        self.emit("MSG", mid, to=right.node_b, bits=f"{m1}{m2}")
        self._correct(c, m1, m2)
        out = EntangledPairHandle(left.a, left.node_a, right.b, right.node_b,
                                  f"swap@{mid}({left.pedigree},{right.pedigree})", 0.0)
        out.nominal_f = _pair_fidelity(st, out)
        self.stats["swaps"] += 1
        self.emit("SWAP", mid, left=left.node_a, right=right.node_b, f=out.nominal_f)
        return out

    def teleport(self, data, data_node, channel, dest=None):
        """Move qubit ``data`` from ``data_node`` across ``channel``.

        The arriving qubit is bound at the far node under ``dest`` (default:
        the data's own id).  The channel is consumed.
        """
        if channel.node_a != data_node:
            channel = channel.flipped()
        if channel.node_a != data_node or channel.node_b == data_node:
            raise MismatchedEndpoints(f"channel {channel.nodes} does not leave {data_node}")
        st = self.store
        d = st.label(data_node, data)
        a = st.label(channel.node_a, channel.a)
        b = st.label(channel.node_b, channel.b)
        m1, m2 = self._bsm(d, a)
        st.free(data_node, data)
        st.free(channel.node_a, channel.a)
        self.emit("MSG", data_node, to=channel.node_b, bits=f"{m1}{m2}")
        self._correct(b, m1, m2)
        dest = dest or data
        st.rename(channel.node_b, channel.b, dest)
        self.stats["teleports"] += 1
        self.emit("TELEPORT", data_node, to=channel.node_b, qubit=str(dest))
        return dest
