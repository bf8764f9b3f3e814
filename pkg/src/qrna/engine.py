"""Recursive request processing: decompose, forward, map, execute.

A node that receives an application request chooses a strategy, breaks
the request into sub-requests with dependency edges, and sends each one
toward the element that should execute it.  Requests addressed to a
network are retargeted to a concrete member at the network boundary.
A sub-request that is still distributed when it reaches its executor is
decomposed again there, so processing recurses down the hierarchy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import density as dm
from .density import DensityMatrix, GateOp
from .errors import (
    CycleDetected,
    GenerationFailed,
    NoEligibleMember,
    PurificationFailed,
    QrnaError,
    RecursionLimit,
    ResourceLimit,
    Unreachable,
    UnsupportedStrategy,
)
from .linklayer import EntangledPairHandle, LinkLayer, QuantumStore
from .requests import (
    BELL,
    CIRCUIT,
    CLUSTER,
    CONSTRAINT_VIOLATION,
    FAIL,
    FANOUT,
    GHZ,
    OK,
    ActionOp,
    ActionRequest,
    FullVirtualId,
    QubitAddress,
    Response,
    StateRequest,
    StateSpec,
    check_response,
    encode,
    validate,
)
from .topology import (
    Hop,
    build_tables,
    next_hop,
    physical_chain,
    select_center,
    swap_order,
)
from .trace import Tracer

DETERMINISTIC, STOCHASTIC = "deterministic", "stochastic"
CREATE_AND_TELEPORT, TELEPORT_GATES = "CREATE_AND_TELEPORT", "TELEPORT_GATES"

INTERNAL_ID_BASE = 1 << 63


@dataclass
class Config:
    """Run knobs.  ``rounds`` caps purification rounds per link (0 disables)."""

    mode: str = DETERMINISTIC
    seed: int = 0
    p_gate: float = 0.0
    rounds: int = 3
    retries: int = 4
    pairs: int = 8
    qubit_cap: int = dm.DEFAULT_QUBIT_CAP
    recursion_limit: int = 16
    check_invariants: bool = False
    shuffle_seed: int | None = None

    def __post_init__(self):
        if self.mode not in (DETERMINISTIC, STOCHASTIC):
            raise ValueError(f"mode must be deterministic or stochastic, got {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0.0 <= self.p_gate <= 1.0:
            raise ValueError(f"p_gate out of [0, 1]: {self.p_gate}")
        for name in ("rounds", "retries", "recursion_limit"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.pairs < 1 or self.qubit_cap < 1:
            raise ValueError("pairs and qubit_cap must be positive")


@dataclass(frozen=True)
class Strategy:
    kind: str = CREATE_AND_TELEPORT
    center: str | None = None


@dataclass
class SubRequest:
    request: object
    executor: str
    role: str


@dataclass
class SubRequestDag:
    origin: tuple
    root: StateRequest
    center: str
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)

    def prerequisites(self, i):
        return sorted(a for a, b in self.edges if b == i)

    def roles(self):
        return [s.role for s in self.nodes]

    def topological_order(self, rng=None):
        """Kahn's algorithm; actions run as soon as they are ready.

        With ``rng`` the choice among ready nodes is randomised, which is
        how tests check that only dependency edges constrain the result.
        """
        n = len(self.nodes)
        indeg = [0] * n
        for _, b in self.edges:
            indeg[b] += 1
        ready = [i for i in range(n) if indeg[i] == 0]
        order = []
        while ready:
            if rng is not None:
                i = ready.pop(int(rng.integers(len(ready))))
            else:
                ready.sort(key=lambda j: (self.nodes[j].role != "teleport", j))
                i = ready.pop(0)
            order.append(i)
            for a, b in self.edges:
                if a == i:
                    indeg[b] -= 1
                    if indeg[b] == 0:
                        ready.append(b)
        if len(order) != n:
            raise CycleDetected(f"sub-request graph has a cycle among {n - len(order)} node(s)")
        return order


class _Counter:
    def __init__(self, start):
        self.next = start

    def __call__(self):
        v = self.next
        self.next += 1
        return v


def decompose(request, topo, requester, strategy=None, new_id=None, new_vaddr=None):
    """Create-and-teleport decomposition of a state request.

    Emits one creation request at the center, then for every target not
    located at the center a Bell-pair request and a teleport action that
    depends on both.
    """
    strategy = strategy or Strategy()
    if strategy.kind == TELEPORT_GATES:
        raise UnsupportedStrategy("teleported-gate execution is not implemented")
    if strategy.kind != CREATE_AND_TELEPORT:
        raise UnsupportedStrategy(f"unknown strategy {strategy.kind!r}")
    names = [t.node for t in request.targets]
    for name in names + [requester]:
        if name not in topo:
            raise Unreachable(f"unknown node or network {name!r}")
    center = strategy.center or select_center(topo, names)
    new_id = new_id or _Counter(INTERNAL_ID_BASE + 1)
    new_vaddr = new_vaddr or _Counter(max(t.vaddr for t in request.targets) + 1)

    local = {}
    for t in request.targets:
        local[t] = t if t.node == center else QubitAddress(center, new_vaddr())
    create = StateRequest(new_id(), request.spec.relabel(local), request.f_min,
                          request.s_max, [local[t] for t in request.targets])
    dag = SubRequestDag((requester, request.id), request, center)
    dag.nodes.append(SubRequest(create, center, "create"))
    remote = [t for t in request.targets if t.node != center]
    f_pair = request.f_min ** (1.0 / len(remote)) if remote else request.f_min
    for t in remote:
        near = QubitAddress(center, new_vaddr())
        far = QubitAddress(t.node, new_vaddr())
        pair = StateRequest(new_id(), StateSpec.bell(), f_pair, request.s_max, [near, far])
        dag.nodes.append(SubRequest(pair, center, "pair"))
        ops = [ActionOp("TELEPORT", [local[t], near, far, t])]
        move = ActionRequest(new_id(), ops, 0.0, float(len(request.targets)),
                             [local[t], near, far, t])
        dag.nodes.append(SubRequest(move, center, "teleport"))
        k = len(dag.nodes) - 1
        dag.edges += [(0, k), (k - 1, k)]
    return dag


def map_boundary(request, boundary, member):
    """Retarget every address naming ``boundary`` to ``member``."""
    def sub(a):
        return QubitAddress(member, a.vaddr) if a.node == boundary else a

    mapping = {t: sub(t) for t in request.targets}
    if isinstance(request, StateRequest):
        return replace(request, spec=request.spec.relabel(mapping),
                       targets=[mapping[t] for t in request.targets])
    ops = [ActionOp(op.kind, [sub(a) for a in op.targets]) for op in request.circuit]
    return replace(request, circuit=ops, targets=[mapping[t] for t in request.targets])


def _basis(level):
    """Parity-check basis for purifying two pairs of the given level."""
    return "Z" if level % 2 == 0 else "X"


class _SubRequestFailed(QrnaError):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


def _prep_gates(spec, labels):
    """Local preparation circuit for ``spec`` on ``labels``."""
    n = len(labels)
    if spec.form == CIRCUIT:
        return None
    if spec.form == CLUSTER:
        return ([("H", [q]) for q in labels]
                + [("CZ", [labels[i], labels[i + 1]]) for i in range(n - 1)])
    head = [("H", [labels[0]])] if spec.form in (BELL, GHZ) else []
    return head + [("CNOT", [labels[0], q]) for q in labels[1:]]


class Engine:
    """Owns the quantum store, routing tables and trace for one run."""

    def __init__(self, topo, config=None, tracer=None):
        self.topo = topo
        self.config = config or Config()
        self.tables = build_tables(topo)
        self.tracer = tracer or Tracer()
        self.rng = np.random.default_rng(self.config.seed)
        self.store = QuantumStore(self.rng, self.config.p_gate, self.config.qubit_cap,
                                  self.config.check_invariants)
        self.link = LinkLayer(self.store, self._link_emit,
                              stochastic=self.config.mode == STOCHASTIC)
        self._order_rng = (None if self.config.shuffle_seed is None
                           else np.random.default_rng(self.config.shuffle_seed))
        self._new_id = _Counter(INTERNAL_ID_BASE + 1)
        self._vaddrs = {}
        self._boundary = {}
        self._namespaces = {}
        self._req = 0
        self._root = None
        self.clock = 0.0
        self._delays = {}

    # -- trace plumbing ----------------------------------------------------

    def emit(self, kind, node, **detail):
        ops = self.store.take_ops()
        if ops:
            detail["ops"] = ops
        return self.tracer.record(node, kind, self._req, **detail)

    def _link_emit(self, kind, node, **detail):
        if kind == "MSG":
            self._advance(node, detail["to"], detail)
        self.emit(kind, node, **detail)

    def _advance(self, src, dst, detail):
        """Charge the classical delay of the shortest physical path."""
        key = (src, dst)
        if key not in self._delays:
            chain = physical_chain(self.topo, src, dst)
            self._delays[key] = sum(self.topo.link(a, b).delay for a, b in zip(chain, chain[1:]))
        self.clock += self._delays[key]
        if self.clock:
            detail["t"] = self.clock

    def _vid(self, origin, vaddr):
        return FullVirtualId(origin[0], origin[1], vaddr)

    # -- entry point -------------------------------------------------------

    def deliver(self, request, at):
        """Process an application request issued at node ``at``."""
        origin = (at, request.id)
        self._req = request.id
        self._root = origin
        self._namespaces[origin] = {origin}
        self.emit("REQ_RECV", at, wire=encode(request).decode())
        problems = validate(request)
        if problems:
            return self._respond_fail(request, at, "InvalidRequest", "; ".join(problems))
        if isinstance(request, ActionRequest):
            return self._respond_fail(request, at, "UnsupportedAction",
                                      "action requests are only issued internally")
        try:
            if not self.topo.is_physical(at):
                raise Unreachable(f"requester {at!r} is not a node")
            dag = self.decompose(request, at, origin)
            resp = self.execute_dag(dag, at)
        except QrnaError as exc:
            reason = getattr(exc, "reason", type(exc).__name__)
            self._req = request.id
            return self._respond_fail(request, at, reason, str(exc))
        self._req = request.id
        self.emit("RSP", at, status=resp.status, f=resp.measured_f, s=resp.measured_s,
                  qubits=self._root_labels(request, origin), root=1)
        return resp

    def _respond_fail(self, request, at, reason, message):
        self._cleanup((at, request.id))
        self._req = request.id
        self.emit("RSP", at, status=FAIL, f=0.0, s=0.0, why=reason, root=1)
        return Response(request.id, FAIL, 0.0, 0.0, None, reason)

    def decompose(self, request, at, origin, strategy=None):
        if origin not in self._vaddrs:
            self._vaddrs[origin] = _Counter(max(t.vaddr for t in request.targets) + 1)
        dag = decompose(request, self.topo, at, strategy, self._new_id, self._vaddrs[origin])
        dag.origin = origin
        self.emit("DECOMPOSE", at, center=dag.center, count=len(dag.nodes),
                  subs=[f"{s.role}:{s.request.id}" for s in dag.nodes],
                  edges=[f"{a}>{b}" for a, b in dag.edges])
        return dag

    def execute_dag(self, dag, at, depth=0):
        """Run sub-requests in dependency order and score the root request."""
        order = dag.topological_order(self._order_rng)
        done = {}
        for i in order:
            for p in dag.prerequisites(i):
                if done[p].status == FAIL:
                    raise _SubRequestFailed(done[p].reason or "PrerequisiteFailed")
            resp = self._dispatch(dag.nodes[i], dag.origin, at, depth)
            done[i] = resp
            if resp.status == FAIL:
                raise _SubRequestFailed(resp.reason or "SubRequestFailed")
        return self._score(dag.root, dag.origin)

    # -- forwarding --------------------------------------------------------

    def _dispatch(self, sub, origin, at, depth):
        req = sub.request
        self._req = req.id
        node, req = self._forward(req, sub.executor, at, origin, depth)
        self._req = req.id
        self.emit("REQ_RECV", node, wire=encode(req).decode(), role=sub.role)
        try:
            if sub.role == "pair" and len({t.node for t in req.targets}) == 1:
                # the center was mapped onto this target's own node: no link needed
                resp = Response(req.id, OK, 1.0, 0.0)
            else:
                resp = self._process(req, node, origin, depth)
        except QrnaError as exc:
            resp = Response(req.id, FAIL, 0.0, 0.0, None,
                            getattr(exc, "reason", type(exc).__name__))
        self._req = req.id
        detail = dict(status=resp.status, f=resp.measured_f, s=resp.measured_s)
        if resp.reason:
            detail["why"] = resp.reason
        self.emit("RSP", node, **detail)
        return resp

    def _forward(self, request, dst, at, origin, depth):
        cur = at
        hops = 0
        while True:
            hop = next_hop(self.topo, self.tables, cur, dst)
            if hop is None:
                break
            hops += 1
            if depth + hops > self.config.recursion_limit:
                raise RecursionLimit(f"request {request.id} exceeded depth "
                                     f"{self.config.recursion_limit}")
            detail = {"to": hop, "carries": request.id}
            self._advance(cur, hop, detail)
            self.emit("MSG", cur, **detail)
            cur = hop
        if dst != cur:
            request = self.map_boundary(request, dst, cur, origin)
        return cur, request

    def map_boundary(self, request, boundary, at, origin):
        """Pick the member of ``boundary`` that hosts the request's qubits.

        The boundary node keeps its first choice per originating request so
        every sub-request of one decomposition lands on the same member.
        """
        members = self.topo.physical(boundary) if boundary in self.topo else []
        if not members or members == [boundary]:
            raise NoEligibleMember(f"{boundary!r} has no member nodes")
        key = (origin, boundary)
        if key not in self._boundary:
            if self.topo.contains(boundary, at):
                self._boundary[key] = at
            else:
                gws = self.topo.gateways(boundary)
                self._boundary[key] = gws[0] if gws else members[0]
        return map_boundary(request, boundary, self._boundary[key])

    # -- processing at the executor ----------------------------------------

    def _process(self, req, node, origin, depth):
        if isinstance(req, ActionRequest):
            return self._run_action(req, node, origin)
        nodes = [t.node for t in req.targets]
        if all(n == node for n in nodes):
            return self._create_local(req, node, origin)
        if req.spec.form == BELL and len(nodes) == 2 and node in nodes:
            return self.fulfill_pair(req, node, origin)
        if depth + 1 > self.config.recursion_limit:
            raise RecursionLimit(f"request {req.id} exceeded depth {self.config.recursion_limit}")
        dag = self.decompose(req, node, origin)
        return self.execute_dag(dag, node, depth + 1)

    def _create_local(self, req, node, origin):
        st = self.store
        labels = [st.alloc(node, self._vid(origin, t.vaddr)) for t in req.targets]
        spec = req.spec
        gates = _prep_gates(spec, labels)
        if gates is None:
            pos = {t: q for t, q in zip(req.targets, labels)}
            gates = [(g.kind, [pos[t] for t in g.targets]) for g in spec.gates]
        if spec.form == FANOUT:
            st.prepare(labels[0], spec.alpha, spec.beta)
        for kind, qs in gates:
            st.gate(kind, qs)
        self.emit("CREATE", node, qubits=labels)
        return self._score(req, origin)

    def _run_action(self, req, node, origin):
        st = self.store
        vid = lambda a: self._vid(origin, a.vaddr)
        for op in req.circuit:
            if op.kind == "TELEPORT":
                data, near, far, dest = op.targets
                if data.node == near.node == far.node == dest.node:
                    st.rename(data.node, vid(data), vid(dest))
                    continue
                channel = EntangledPairHandle(vid(near), near.node, vid(far), far.node,
                                              f"request:{req.id}", math.nan)
                self.link.teleport(vid(data), data.node, channel, dest=vid(dest))
            elif op.kind == "MEASZ":
                (a,) = op.targets
                st.measure(st.label(a.node, vid(a)))
            else:
                st.gate(op.kind, [st.label(a.node, vid(a)) for a in op.targets])
        return Response(req.id, OK, math.nan, math.nan)

    def fulfill_pair(self, req, node, origin):
        """End-to-end Bell pair for a two-target request, by purify and swap."""
        near, far = req.targets
        if near.node != node:
            near, far = far, near
        chain = physical_chain(self.topo, near.node, far.node)
        budget = req.f_min ** (1.0 / (len(chain) - 1))
        ns = (node, req.id)
        self._namespaces.setdefault(self._root, set()).add(ns)
        state = {"infeasible": False}

        def build(tree):
            if isinstance(tree, Hop):
                return self._link_pair(tree.a, tree.b, budget, ns, state)
            left = build(tree.left)
            right = build(tree.right)
            return self.link.swap(left, right)

        pair = build(swap_order(chain))
        if pair.node_a != near.node:
            pair = pair.flipped()
        self.store.rename(pair.node_a, pair.a, self._vid(origin, near.vaddr))
        self.store.rename(pair.node_b, pair.b, self._vid(origin, far.vaddr))
        resp = self._score(req, origin)
        if resp.status == CONSTRAINT_VIOLATION and state["infeasible"]:
            resp = replace(resp, reason="BudgetInfeasible")
        return resp

    def _generate(self, u, v, ns):
        link = self.topo.link(u, v)
        attempts = 1 + (self.config.retries if self.config.mode == STOCHASTIC else 0)
        for _ in range(attempts):
            try:
                return self.link.generate_pair(link, ns, a=u, b=v)
            except GenerationFailed:
                continue
        raise GenerationFailed(f"no pair on {u}-{v} after {attempts} attempt(s)")

    def _failure(self, failures):
        failures[0] += 1
        if failures[0] > self.config.retries:
            raise PurificationFailed("purification retry cap exhausted")

    def _level_pair(self, u, v, level, ns):
        """A pair that has been through ``level`` symmetric purification rounds."""
        if level + 1 > self.config.pairs:
            raise ResourceLimit(f"level-{level} pair needs more than {self.config.pairs} pairs")
        if level == 0:
            return self._generate(u, v, ns)
        failures = [0]
        while True:
            a = self._level_pair(u, v, level - 1, ns)
            b = self._level_pair(u, v, level - 1, ns)
            try:
                return self.link.purify(a, b, _basis(level - 1))
            except PurificationFailed:
                self._failure(failures)

    def _link_pair(self, u, v, target, ns, state):
        pair = self._generate(u, v, ns)
        level = 0
        failures = [0]
        while pair.nominal_f < target:
            if level >= self.config.rounds or pair.nominal_f <= 0.5:
                state["infeasible"] = True
                break
            if level + 2 > self.config.pairs:
                raise ResourceLimit(f"purifying {u}-{v} needs more than {self.config.pairs} pairs")
            partner = self._level_pair(u, v, level, ns)
            try:
                pair = self.link.purify(pair, partner, _basis(level))
                level += 1
                failures = [0]
            except PurificationFailed:
                self._failure(failures)
                pair = self._level_pair(u, v, level, ns)
        return pair

    # -- results -----------------------------------------------------------

    def _root_labels(self, request, origin):
        return [self.store.label(t.node, self._vid(origin, t.vaddr)) for t in request.targets]

    def _score(self, request, origin):
        labels = self._root_labels(request, origin)
        rho = self.store.state(labels)
        named = DensityMatrix(rho.data, [str(t) for t in request.targets])
        return check_response(named, request)

    def release(self, request, at):
        """Free the delivered qubits of a finished application request."""
        origin = (at, request.id)
        self._req = request.id
        self._cleanup(origin)
        self.emit("RELEASE", at)

    def _cleanup(self, origin):
        spaces = self._namespaces.get(origin, {origin})
        for node in sorted(self.store.maps):
            for vid, _ in self.store.maps[node].items():
                if (vid.requester, vid.request_id) in spaces:
                    self.store.free(node, vid)
