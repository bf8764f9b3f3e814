"""Replaying engine traces on a flat reference simulator.

The engine keeps qubits in small independent blocks.  The replay holds
every live qubit in one register, applies the logged operations with the
logged measurement outcomes, and recomputes each delivered state.
"""
# %%
from qrna import density as dm
from qrna import oracle
from qrna.harness import Scenario, bundled, run

for name in ("ra_noiseless.scn", "ra_noisy.scn", "bell_purified.scn", "teleport.scn"):
    result = run(Scenario.load(bundled(name)))
    reg, deliveries = oracle.replay(result.trace)
    for d, resp in zip(deliveries, result.responses):
        dist = dm.trace_distance(resp.rho, dm.DensityMatrix(d.rho, resp.rho.qubits))
        print(f"{name:18} {resp.status:21} f={resp.measured_f:.10f} "
              f"peak={reg.peak:2d} trace_distance={dist:.1e}")

# %% The noisy worked example report
print(run(Scenario.load(bundled("ra_noisy.scn"))).report)
