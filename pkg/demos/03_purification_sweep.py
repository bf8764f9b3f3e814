"""Recurrence purification of two Werner pairs.

For each input fidelity the circuit run in the quantum store is compared
with an exhaustive enumeration of the four-qubit measurement branches.
"""
# %%
import numpy as np

from qrna import oracle
from qrna.linklayer import LinkLayer, QuantumStore
from qrna.topology import Link

print("F_in   p_ok      F_out     oracle_F_out")
for f in np.arange(0.55, 0.951, 0.05):
    store = QuantumStore(np.random.default_rng(0))
    ll = LinkLayer(store)
    a = ll.generate_pair(Link("A", "B", f_link=f), ("demo", 1))
    b = ll.generate_pair(Link("A", "B", f_link=f), ("demo", 1))
    store.forced.extend([0, 0])
    out = ll.purify(a, b)
    p_ok, f_ok = oracle.purification_oracle(f)
    print(f"{f:.2f}   {out.success_probability:.6f}  {out.nominal_f:.6f}  {f_ok:.6f}")

# %% Repeated rounds alternate the parity-check basis
for f in (0.8, 0.9, 0.95):
    levels = oracle.recurrence_reachable(f, 3)
    print(f, " ".join(f"{x:.5f}" for x in levels))
