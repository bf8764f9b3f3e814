"""Hierarchical routing on the bundled example topology.

Each node keeps one entry per sibling at every level of nesting: a
neighbour it reaches directly, a network reached through a next hop, or
its own network marked as handled locally.
"""
# %%
from qrna.harness import bundled, check_tables, routes
from qrna.topology import Topology, build_tables, forward_path, select_path

topo = Topology.load(bundled("example.topo"))
tables = build_tables(topo)
print(tables["Node11"].format())
print(tables["Node51"].format())

# %% Hop-by-hop forwarding from Node11 towards Node77
print(" -> ".join(forward_path(topo, tables, "Node11", "Node77")))
print("network-level path:", " -> ".join(select_path(topo, "Node11", "Node77")))

# %% The shipped golden files agree with the generated tables
diff = check_tables(topo, [bundled("table_node11.golden"), bundled("table_node51.golden")])
print("goldens match" if not diff else diff)

# %% Every table at once
print(routes(topo))
