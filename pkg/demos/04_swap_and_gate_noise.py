"""Entanglement swapping of Werner(0.95) and Werner(0.90) pairs.

Noisy local gates depolarize every operand after each gate, so the
swapped pair loses fidelity as the gate error grows.
"""
# %%
import numpy as np

from qrna import oracle
from qrna.linklayer import LinkLayer, QuantumStore
from qrna.topology import Link

for p_gate in (0.0, 0.01, 0.05, 0.1):
    store = QuantumStore(np.random.default_rng(0), p_gate)
    ll = LinkLayer(store)
    ab = ll.generate_pair(Link("A", "B", f_link=0.95), ("demo", 1))
    bc = ll.generate_pair(Link("B", "C", f_link=0.90), ("demo", 1))
    ac = ll.swap(ab, bc)
    print(f"p_gate={p_gate:<5} F(A,C)={ac.nominal_f:.9f} "
          f"oracle={oracle.swap_oracle(0.95, 0.90, p_gate):.9f}")

# %% Teleporting 0.6|0> + 0.8|1> through a Werner(0.95) channel
print("teleport fidelity:", oracle.teleport_oracle(0.6, 0.8, 0.95))
