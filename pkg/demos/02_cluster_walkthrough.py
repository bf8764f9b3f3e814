"""A three-qubit linear cluster spread over Node11, Node55 and Node77.

The request is split into one creation at the center network, one Bell
pair per remote target and one teleport per target.  With perfect links
the delivered state is exactly the cluster state.
"""
# %%
from qrna.density import GateOp
from qrna.engine import Config, Engine, decompose
from qrna.harness import bundled
from qrna.requests import QubitAddress, StateRequest, StateSpec, encode
from qrna.topology import Topology

addrs = [QubitAddress(n, 1000) for n in ("Node11", "Node55", "Node77")]
gates = [GateOp("H", [q]) for q in addrs] + [GateOp("CZ", addrs[:2]), GateOp("CZ", addrs[1:])]
request = StateRequest(1, StateSpec.circuit(gates), 0.99, 0.1, addrs)
print(encode(request).decode())

# %% Decomposition
topo = Topology.load(bundled("example.topo"))
dag = decompose(request, topo, "Node11")
print("center:", dag.center)
for k, sub in enumerate(dag.nodes):
    print(k, sub.role, [str(t) for t in sub.request.targets], "after", dag.prerequisites(k))

# %% Execution over perfect links
engine = Engine(topo, Config(check_invariants=True))
resp = engine.deliver(request, "Node11")
print(resp.status, f"f={resp.measured_f:.12f}", f"s={resp.measured_s:.2e}")
print("link work:", engine.link.stats)

# %% The first trace lines
print("\n".join(engine.tracer.format().splitlines()[:12]))
