import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrna.errors import ParseError, Unreachable
from qrna.harness import bundled, check_tables, routes
from qrna.topology import (
    Hop,
    Swap,
    Topology,
    build_tables,
    dijkstra,
    forward_path,
    leaves,
    next_hop,
    physical_chain,
    select_center,
    select_path,
    swap_nodes,
    swap_order,
)


@pytest.fixture(scope="module")
def topo():
    return Topology.load(bundled("example.topo"))


@pytest.fixture(scope="module")
def tables(topo):
    return build_tables(topo)


def test_node11_table(tables):

    assert tables["Node11"].format() == (
        "table Node11\n"
        "Node19\t(direct)\n"
        "Net1\tLocal\n"
        "Net5\tNode19\n"
        "Net7\tNet5\n"
    )


def test_node51_table(tables):

    assert tables["Node51"].format() == (
        "table Node51\n"
        "Node52\t(direct)\n"
        "Node55\tNode52\n"
        "Net1\tNode19\n"
        "Net5\t(process locally)\n"
        "Net7\tNode71\n"
    )


def test_bundled_goldens_match(topo):
    goldens = [bundled("table_node11.golden"), bundled("table_node51.golden")]
    assert check_tables(topo, goldens) == ""


def test_extra_node_breaks_goldens(topo):
    text = bundled("example.topo").read_text() + "node Node12 in Net1\nlink Node11 Node12\n"
    diff = check_tables(Topology.parse(text), [bundled("table_node11.golden")])
    assert "+Node12\t(direct)" in diff


def test_empty_topology_prints_nothing():
    assert routes(Topology.parse("")) == ""


def test_malformed_line_names_the_line():
    with pytest.raises(ParseError) as err:
        Topology.parse("net A\nnode X in A\nlink X Y\n", source="bad.topo")
    assert err.value.line == 3
    assert "bad.topo" in str(err.value)


@pytest.mark.parametrize("line", [
    "net A in Missing",
    "node X in A wizard",
    "link X X",
    "link X Z flink=0.2",
    "link X Z pgen=1.5",
    "link X Z cost=0",
    "link X Z delay=-1",
    "link X A",
    "bogus",
])
def test_bad_directives(line):
    with pytest.raises(ParseError):
        Topology.parse(f"net A\nnode X in A\nnode Z in A\n{line}\n")


def test_disconnected_topology_lists_pairs():
    t = Topology.parse("net A\nnet B\nnode X in A\nnode Y in B\n")
    with pytest.raises(Unreachable, match="A->B|X->"):
        build_tables(t)


def test_next_hop_and_forwarding(topo, tables):
    assert next_hop(topo, tables, "Node11", "Node77") == "Node19"
    assert next_hop(topo, tables, "Node11", "Net1") is None
    assert forward_path(topo, tables, "Node11", "Node77") == [
        "Node11", "Node19", "Node51", "Node71", "Node77"]
    assert forward_path(topo, tables, "Node11", "Net5") == ["Node11", "Node19", "Node51"]


def test_select_center_for_worked_example(topo):
    assert select_center(topo, ["Node11", "Node55", "Node77"]) == "Net5"
    assert select_center(topo, ["Node71", "Node77"]) == "Node71"
    assert select_center(topo, ["Node55"]) == "Node55"


def test_physical_chains(topo):
    assert physical_chain(topo, "Node51", "Node11") == ["Node51", "Node19", "Node11"]
    assert physical_chain(topo, "Node51", "Node55") == ["Node51", "Node52", "Node55"]
    assert physical_chain(topo, "Node11", "Node55") == [
        "Node11", "Node19", "Node51", "Node52", "Node55"]
    assert select_path(topo, "Node11", "Node77") == ["Net1", "Net5", "Net7"]


def test_swap_order_examples():
    assert swap_order(["A", "B"]) == Hop("A", "B")
    tree = swap_order(["A", "B", "C", "D", "E"])
    assert tree.node == "C"
    assert swap_nodes(tree) == ["B", "D", "C"]
    assert leaves(tree) == [Hop("A", "B"), Hop("B", "C"), Hop("C", "D"), Hop("D", "E")]
    with pytest.raises(ValueError):
        swap_order(["A"])


@given(st.integers(2, 12))
def test_swap_tree_covers_chain(n):
    chain = [f"N{i:02d}" for i in range(n)]
    tree = swap_order(chain)
    assert [(h.a, h.b) for h in leaves(tree)] == list(zip(chain, chain[1:]))
    assert sorted(swap_nodes(tree)) == chain[1:-1]
    if n > 2:
        assert isinstance(tree, Swap)


# -- brute-force path oracle ------------------------------------------------------

def brute_force_path(graph, src, dst):
    """(cost, path) minimising cost then the name sequence, over simple paths."""
    best = None
    others = [v for v in graph if v not in (src, dst)]
    for k in range(len(others) + 1):
        for mid in itertools.permutations(others, k):
            path = [src, *mid, dst]
            if all(b in graph[a] for a, b in zip(path, path[1:])):
                cost = sum(graph[a][b] for a, b in zip(path, path[1:]))
                if best is None or (cost, path) < best:
                    best = (cost, path)
    return best


@st.composite
def flat_topologies(draw):
    n = draw(st.integers(2, 6))
    names = [f"N{i}" for i in range(n)]
    lines = ["net W"] + [f"node {x} in W" for x in names]
    for a, b in itertools.combinations(names, 2):
        if draw(st.booleans()):
            lines.append(f"link {a} {b} cost={draw(st.integers(1, 3))}")
    return Topology.parse("\n".join(lines)), names


@settings(max_examples=150, deadline=None)
@given(flat_topologies())
def test_dijkstra_matches_brute_force(case):
    topo, names = case
    graph = topo.level_graph("W")
    for src in names:
        found = dijkstra(graph, src)
        for dst in names:
            if dst == src:
                continue
            want = brute_force_path(graph, src, dst)
            if want is None:
                assert dst not in found
            else:
                cost, path = found[dst]
                assert (cost, list(path)) == (want[0], want[1])


@settings(max_examples=60, deadline=None)
@given(flat_topologies())
def test_forwarding_follows_a_shortest_path(case):
    topo, names = case
    graph = topo.level_graph("W")
    try:
        tables = build_tables(topo)
    except Unreachable:
        return
    for src, dst in itertools.permutations(names, 2):
        walk = forward_path(topo, tables, src, dst)
        assert walk[0] == src and walk[-1] == dst
        cost = sum(topo.link(a, b).cost for a, b in zip(walk, walk[1:]))
        assert cost == brute_force_path(graph, src, dst)[0]
