"""Acceptance criteria, each timed and reported on one PASS/FAIL line."""
import contextlib
import time

import numpy as np
import pytest

from qrna import density as dm
from qrna import oracle
from qrna.density import DensityMatrix, GateOp, QubitSlot
from qrna.engine import Config, Engine, decompose
from qrna.errors import DoubleBind, SlotBusy, UnknownAddress
from qrna.harness import Scenario, bundled, check_tables, run
from qrna.linklayer import LinkLayer, QuantumStore
from qrna.requests import (
    CONSTRAINT_VIOLATION,
    OK,
    STATUSES,
    ActionOp,
    ActionRequest,
    FullVirtualId,
    QubitAddress,
    Response,
    StateRequest,
    StateSpec,
    VirtualMap,
    decode,
    encode,
)
from qrna.topology import Link, Topology

SCENARIOS = ["ra_noiseless.scn", "ra_noisy.scn", "bell_purified.scn", "teleport.scn"]
SWEEP = [0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95]
NS = ("Acceptance", 1)

# frozen from the flat oracle replay of the noisy worked example
NOISY_RA_F = 0.5484393525377228


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def timed(label, budget=None):
        start = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            late = budget is not None and elapsed >= budget
            with capsys.disabled():
                limit = f" (limit {budget:g} s)" if budget is not None else ""
                verdict = "PASS" if ok and not late else "FAIL"
                print(f"\n{verdict} {label}: {elapsed:.3f} s{limit}")
        assert not late, f"{label} took {elapsed:.3f} s, limit {budget} s"
    return timed


def worked_example(f_min=0.99, s_max=0.1):
    a = [QubitAddress(n, 1000) for n in ("Node11", "Node55", "Node77")]
    gates = [GateOp("H", [q]) for q in a] + [GateOp("CZ", a[:2]), GateOp("CZ", a[1:])]
    return StateRequest(1, StateSpec.circuit(gates), f_min, s_max, a)


def deliver(f_link=1.0, rounds=3, p_gate=0.0):
    topo = Topology.load(bundled("example.topo")).with_link_params(f_link=f_link)
    engine = Engine(topo, Config(rounds=rounds, p_gate=p_gate, check_invariants=True))
    return engine, engine.deliver(worked_example(), "Node11")


def link_layer(p_gate=0.0):
    store = QuantumStore(np.random.default_rng(0), p_gate, check_invariants=True)
    return store, LinkLayer(store)


def purification_case(f, branch):
    store, ll = link_layer()
    a = ll.generate_pair(Link("A", "B", f_link=f), NS)
    b = ll.generate_pair(Link("A", "B", f_link=f), NS)
    store.forced.extend([branch, branch])
    return store, ll.purify(a, b)


def swap_case(p_gate):
    store, ll = link_layer(p_gate)
    ab = ll.generate_pair(Link("A", "B", f_link=0.95), NS)
    bc = ll.generate_pair(Link("B", "C", f_link=0.90), NS)
    return store, ll.swap(ab, bc)


def test_c1_routing_tables(criterion):
    with criterion("C1 routing tables match goldens", 1.0):
        goldens = [bundled("table_node11.golden"), bundled("table_node51.golden")]
        assert check_tables(bundled("example.topo"), goldens) == ""


def test_c2_worked_example_decomposition(criterion):
    with criterion("C2 worked example decomposes into 7 sub-requests", 1.0):
        dag = decompose(worked_example(), Topology.load(bundled("example.topo")), "Node11")
        roles = dag.roles()
        assert len(dag.nodes) == 7
        assert roles.count("create") == 1 and dag.nodes[0].role == "create"
        assert roles.count("pair") == 3 and roles.count("teleport") == 3
        assert dag.center == "Net5"
        assert all(t.node == "Net5" for t in dag.nodes[0].request.targets)
        for k, s in enumerate(dag.nodes):
            if s.role == "teleport":
                assert isinstance(s.request, ActionRequest)
                deps = dag.prerequisites(k)
                assert [dag.nodes[d].role for d in deps] == ["create", "pair"]


def test_c3_noiseless_end_to_end(criterion):
    with criterion("C3 noiseless worked example", 10.0):
        _, resp = deliver()
        assert resp.status == OK
        assert resp.measured_f == pytest.approx(1.0, abs=1e-9)
        assert resp.measured_s == pytest.approx(0.0, abs=1e-9)


def test_c4_flat_oracle_equivalence(criterion):
    with criterion("C4 bundled scenarios agree with flat replay", 60.0):
        worst = 0.0
        for name in SCENARIOS:
            result = run(Scenario.load(bundled(name)), check_invariants=True)
            reg, deliveries = oracle.replay(result.trace)
            assert reg.peak <= oracle.ORACLE_CAP
            assert len(deliveries) == len(result.responses)
            for d, resp in zip(deliveries, result.responses):
                flat = DensityMatrix(d.rho, resp.rho.qubits)
                worst = max(worst, dm.trace_distance(resp.rho, flat))
        assert worst <= 1e-9


def test_c5_purification_sweep(criterion):
    with criterion("C5 purification sweep matches 4-qubit oracle", 30.0):
        for f in SWEEP:
            p_ok, f_ok = oracle.purification_oracle(f)
            branches = oracle.purification_branches(f, f)
            assert sum(p for p, _ in branches.values()) == pytest.approx(1.0, abs=1e-12)
            for branch in (0, 1):
                _, out = purification_case(f, branch)
                assert out.success_probability == pytest.approx(p_ok, abs=1e-9)
                assert out.nominal_f == pytest.approx(branches[(branch, branch)][1], abs=1e-9)
                assert out.nominal_f > f
            assert f_ok > f


def test_c6_swap_degradation(criterion):
    with criterion("C6 swap fidelity and gate-noise degradation", 10.0):
        ideal = oracle.swap_oracle(0.95, 0.90)
        assert ideal == pytest.approx(0.95 * 0.90 + 0.05 * 0.10 / 3, abs=1e-12)
        _, out = swap_case(0.0)
        assert out.nominal_f == pytest.approx(ideal, abs=1e-9)
        for p_gate in (0.01, 0.05):
            _, noisy = swap_case(p_gate)
            assert noisy.nominal_f == pytest.approx(oracle.swap_oracle(0.95, 0.90, p_gate),
                                                    abs=1e-9)
            assert noisy.nominal_f < ideal


def test_c7_constraint_enforcement(criterion):
    with criterion("C7 noisy worked example is a constraint violation", 10.0):
        engine, resp = deliver(f_link=0.9, rounds=0)
        assert resp.status == CONSTRAINT_VIOLATION
        _, (d,) = oracle.replay(engine.tracer.format())
        assert resp.measured_f == pytest.approx(d.f, abs=1e-9)
        assert resp.measured_f == pytest.approx(NOISY_RA_F, abs=1e-9)
        assert resp.measured_f < 0.99


# -- C8 ----------------------------------------------------------------------------

def random_name(rng):
    alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_-"
    return "N" + "".join(rng.choice(list(alphabet), size=int(rng.integers(0, 8))))


def random_float(rng):
    pick = rng.integers(4)
    if pick == 0:
        return float(rng.random())
    if pick == 1:
        return float(rng.choice([0.0, 1.0, 0.1, 0.99, 5e-324, 1e300]))
    return float(rng.normal() * 10.0 ** int(rng.integers(-20, 20)))


def random_tuple(rng):
    n = int(rng.integers(1, 6))
    targets = list(dict.fromkeys(QubitAddress(random_name(rng), int(rng.integers(0, 2**63)) * 2 + 1)
                                 for _ in range(n)))
    kind = rng.integers(3)
    rid = int(rng.integers(0, 2**63)) * 2
    if kind == 0:
        form = rng.choice(["bell", "ghz", "cluster", "fanout", "circuit"])
        if form == "bell":
            targets, spec = (targets * 2)[:2], StateSpec.bell()
            if targets[0] == targets[1]:
                targets[1] = QubitAddress(targets[1].node + "x", 0)
        elif form == "fanout":
            spec = StateSpec.fanout(complex(random_float(rng), random_float(rng)),
                                    complex(random_float(rng), random_float(rng)), len(targets))
        elif form == "circuit":
            ops = []
            for _ in range(int(rng.integers(0, 5))):
                kind_ = rng.choice(sorted(dm.GATE_ARITY))
                k = dm.GATE_ARITY[kind_]
                if k <= len(targets):
                    idx = rng.permutation(len(targets))[:k]
                    ops.append(GateOp(str(kind_), [targets[i] for i in idx]))
            spec = StateSpec.circuit(ops)
        else:
            spec = StateSpec(str(form), n=len(targets))
        return StateRequest(rid, spec, float(rng.random()), abs(random_float(rng)), targets)
    if kind == 1:
        ops = []
        for _ in range(int(rng.integers(0, 4))):
            name = rng.choice(sorted(ActionOp.ARITY))
            k = ActionOp.ARITY[name]
            if k <= len(targets):
                idx = rng.permutation(len(targets))[:k]
                ops.append(ActionOp(str(name), [targets[i] for i in idx]))
        return ActionRequest(rid, ops, float(rng.random()), abs(random_float(rng)), targets)
    rho = None
    if rng.random() < 0.5:
        d = 2 ** int(rng.integers(1, 3))
        data = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = DensityMatrix(data, [f"q{i}" for i in range(int(np.log2(d)))])
    reason = str(rng.choice(["", "BudgetInfeasible", "GenerationFailed"]))
    return Response(rid, str(rng.choice(STATUSES)), float(rng.random()),
                    abs(random_float(rng)), rho, reason)


def virtual_map_sequence(rng, length):
    vm, live = VirtualMap("N"), {}
    for _ in range(length):
        op = rng.choice(["bind", "rebind", "release"])
        vid = FullVirtualId("R", 7, int(rng.integers(6)))
        slot = QubitSlot("N", int(rng.integers(6)))
        try:
            if op == "bind":
                vm.bind(vid, slot)
                live[vid] = slot
            elif op == "rebind":
                vm.rebind(vid, slot)
                live[vid] = slot
            else:
                vm.release(vid)
                del live[vid]
        except (DoubleBind, SlotBusy, UnknownAddress):
            pass
        assert vm.is_injective() and dict(vm.items()) == live
    for vid in list(live):
        vm.release(vid)
    assert len(vm) == 0


def test_c8_protocol_invariants(criterion):
    with criterion("C8 wire, virtual map, trace order and seed determinism", 30.0):
        rng = np.random.default_rng(2024)
        for _ in range(1200):
            x = random_tuple(rng)
            wire = encode(x)
            assert decode(wire) == x and encode(decode(wire)) == wire
        for _ in range(200):
            virtual_map_sequence(rng, 40)
        for name in SCENARIOS:
            first = run(Scenario.load(bundled(name)))
            seqs = [e.seq for e in first.engine.tracer.events]
            assert seqs == sorted(set(seqs))
            assert first.engine.store.live_qubits() == []
            again = run(Scenario.load(bundled(name)))
            assert first.trace == again.trace and first.report == again.report
        a = run(Scenario.load(bundled("bell_purified.scn")), seed=77, mode="stochastic")
        b = run(Scenario.load(bundled("bell_purified.scn")), seed=77, mode="stochastic")
        assert a.trace == b.trace


def test_c9_density_numerics(criterion):
    with criterion("C9 density invariants and entropy anchors"):
        checks = 0
        for kwargs in ({}, {"f_link": 0.9, "rounds": 0}, {"f_link": 0.9, "rounds": 2},
                       {"f_link": 0.95, "p_gate": 0.01}):
            engine, _ = deliver(**kwargs)
            checks += engine.store.invariant_checks
        for name in SCENARIOS:
            checks += run(Scenario.load(bundled(name)),
                          check_invariants=True).engine.store.invariant_checks
        for f in SWEEP:
            checks += purification_case(f, 0)[0].invariant_checks
        for p_gate in (0.0, 0.01, 0.05):
            checks += swap_case(p_gate)[0].invariant_checks
        assert checks > 0
        _, resp = deliver()
        assert dm.entropy(resp.rho) < 1e-9
        assert dm.entropy(dm.from_pure(dm.PHI_PLUS, [0, 1])) < 1e-9
        assert dm.entropy(DensityMatrix(np.eye(2) / 2, [0])) == pytest.approx(1.0, abs=1e-12)
