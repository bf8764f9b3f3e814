"""Recursive network topology, hierarchical routing tables and path planning.

A topology is a tree of networks whose leaves are physical nodes
(repeaters or hosts).  Links join physical nodes.  At every level of the
tree a network is seen from outside as a single element, so routing
happens on small per-level graphs:

* a node sees its siblings precisely;
* at each ancestor level it sees the peer networks only by name.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, Unreachable, UnknownDestination

REPEATER, HOST, NETWORK = "REPEATER", "HOST", "NETWORK"

DIRECT, VIA, LOCAL, PROCESS_LOCALLY = "DIRECT", "VIA", "LOCAL", "PROCESS_LOCALLY"


@dataclass
class Element:
    name: str
    kind: str
    parent: str | None = None
    gateway: bool = False
    members: list = field(default_factory=list)


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    cost: float = 1.0
    f_link: float = 1.0
    p_gen: float = 1.0
    delay: float = 0.0

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError(f"link endpoints must differ ({self.a})")
        if not self.cost > 0:
            raise ValueError(f"link cost must be positive, got {self.cost}")
        if not 0.25 < self.f_link <= 1.0:
            raise ValueError(f"f_link must be in (0.25, 1], got {self.f_link}")
        if not 0.0 <= self.p_gen <= 1.0:
            raise ValueError(f"p_gen must be in [0, 1], got {self.p_gen}")
        if not self.delay >= 0:
            raise ValueError(f"delay must be non-negative, got {self.delay}")

    @property
    def ends(self):
        return tuple(sorted((self.a, self.b)))

    def other(self, end):
        return self.b if end == self.a else self.a


@dataclass(frozen=True)
class RouteEntry:
    kind: str
    via: str | None = None

    def __str__(self):
        return {
            DIRECT: "(direct)",
            LOCAL: "Local",
            PROCESS_LOCALLY: "(process locally)",
        }.get(self.kind, self.via)


@dataclass
class RoutingTable:
    owner: str
    entries: dict

    def __getitem__(self, dest):
        return self.entries[dest]

    def __contains__(self, dest):
        return dest in self.entries

    def format(self):
        lines = [f"table {self.owner}"]
        lines += [f"{dest}\t{entry}" for dest, entry in self.entries.items()]
        return "\n".join(lines) + "\n"


# -- shortest paths ---------------------------------------------------------------

def dijkstra(graph, src):
    """Shortest paths from ``src`` in ``{u: {v: cost}}``.

    Returns ``{v: (cost, path)}``.  Among equal-cost paths the
    lexicographically smallest node sequence wins, which in particular picks
    the smallest next-hop name.
    """
    best = {}
    heap = [(0.0, (src,))]
    while heap:
        d, path = heapq.heappop(heap)
        u = path[-1]
        if u in best:
            continue
        best[u] = (d, path)
        for v, c in graph.get(u, {}).items():
            if v not in best:
                heapq.heappush(heap, (d + c, path + (v,)))
    return best


class Topology:
    def __init__(self):
        self.elements = {}
        self.links = []
        self._adj = {}

    # -- construction ------------------------------------------------------

    def add_network(self, name, parent=None):
        self._add(Element(name, NETWORK, parent))

    def add_node(self, name, network, gateway=False, kind=REPEATER):
        self._add(Element(name, kind, network, gateway))

    def _add(self, el):
        if el.name in self.elements:
            raise ValueError(f"duplicate element name {el.name!r}")
        if el.parent is not None:
            parent = self.elements.get(el.parent)
            if parent is None or parent.kind != NETWORK:
                raise ValueError(f"{el.name}: unknown parent network {el.parent!r}")
            parent.members.append(el.name)
            parent.members.sort()
        elif el.kind != NETWORK:
            raise ValueError(f"node {el.name} must belong to a network")
        self.elements[el.name] = el

    def add_link(self, a, b, cost=1.0, f_link=1.0, p_gen=1.0, delay=0.0):
        for end in (a, b):
            if end not in self.elements:
                raise ValueError(f"link endpoint {end!r} is not defined")
            if self.elements[end].kind == NETWORK:
                raise ValueError(f"link endpoint {end!r} is a network, not a node")
        link = Link(a, b, float(cost), float(f_link), float(p_gen), float(delay))
        if self.link(a, b) is not None:
            raise ValueError(f"duplicate link {a}-{b}")
        self.links.append(link)
        self._adj.setdefault(a, {})[b] = link
        self._adj.setdefault(b, {})[a] = link
        return link

    @classmethod
    def parse(cls, text, source=None):
        topo = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            words = line.split()
            try:
                topo._parse_line(words)
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{exc} in {raw.strip()!r}", line=lineno, source=source) from None
        return topo

    def _parse_line(self, words):
        head = words[0]
        if head == "net":
            if len(words) == 2:
                self.add_network(words[1])
            elif len(words) == 4 and words[2] == "in":
                self.add_network(words[1], words[3])
            else:
                raise ValueError("expected: net <name> [in <parent>]")
        elif head == "node":
            if len(words) < 4 or words[2] != "in":
                raise ValueError("expected: node <name> in <net> [gateway]")
            flags = set(words[4:])
            unknown = flags - {"gateway", "host", "repeater"}
            if unknown:
                raise ValueError(f"unknown node flag(s) {sorted(unknown)}")
            kind = HOST if "host" in flags else REPEATER
            self.add_node(words[1], words[3], "gateway" in flags, kind)
        elif head == "link":
            if len(words) < 3:
                raise ValueError("expected: link <a> <b> [cost=] [flink=] [pgen=] [delay=]")
            opts = {}
            for w in words[3:]:
                key, sep, val = w.partition("=")
                if not sep or key not in ("cost", "flink", "pgen", "delay") or key in opts:
                    raise ValueError(f"bad link option {w!r}")
                opts[key] = float(val)
            self.add_link(words[1], words[2], opts.get("cost", 1.0),
                          opts.get("flink", 1.0), opts.get("pgen", 1.0),
                          opts.get("delay", 0.0))
        else:
            raise ValueError(f"unknown directive {head!r}")

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls.parse(path.read_text(), source=str(path))

    def with_link_params(self, f_link=None, p_gen=None):
        """Copy with every link's fidelity and/or success probability replaced."""
        out = Topology()
        for el in self._ordered():
            if el.kind == NETWORK:
                out.add_network(el.name, el.parent)
            else:
                out.add_node(el.name, el.parent, el.gateway, el.kind)
        for l in self.links:
            out.add_link(l.a, l.b, l.cost,
                         l.f_link if f_link is None else f_link,
                         l.p_gen if p_gen is None else p_gen, l.delay)
        return out

    def _ordered(self):
        done, out = set(), []

        def visit(name):
            if name in done:
                return
            el = self.elements[name]
            if el.parent is not None:
                visit(el.parent)
            done.add(name)
            out.append(el)

        for name in self.elements:
            visit(name)
        return out

    # -- structure queries -------------------------------------------------

    def __contains__(self, name):
        return name in self.elements

    def is_physical(self, name):
        return name in self.elements and self.elements[name].kind != NETWORK

    def nodes(self):
        return sorted(n for n, el in self.elements.items() if el.kind != NETWORK)

    def children(self, parent):
        if parent is None:
            return sorted(n for n, el in self.elements.items() if el.parent is None)
        return list(self.elements[parent].members)

    def parent(self, name):
        return self.elements[name].parent

    def ancestors(self, name):
        """Enclosing networks, innermost first (the implicit root excluded)."""
        out = []
        p = self.elements[name].parent
        while p is not None:
            out.append(p)
            p = self.elements[p].parent
        return out

    def depth(self, name):
        return len(self.ancestors(name))

    def contains(self, net, name):
        return name == net or net in self.ancestors(name)

    def physical(self, name):
        """Physical nodes inside ``name`` (itself, for a node)."""
        el = self.elements[name]
        if el.kind != NETWORK:
            return [name]
        out = []
        for m in el.members:
            out.extend(self.physical(m))
        return sorted(out)

    def link(self, a, b):
        return self._adj.get(a, {}).get(b)

    def neighbors(self, node):
        return sorted(self._adj.get(node, {}))

    def is_gateway(self, node, net):
        """True if ``node`` is a declared gateway of ``net`` or links outside it."""
        if not self.contains(net, node):
            return False
        if self.elements[node].gateway and self.parent(node) == net:
            return True
        return any(not self.contains(net, n) for n in self.neighbors(node))

    def gateways(self, net):
        return [n for n in self.physical(net) if self.is_gateway(n, net)]

    # -- per-level graphs --------------------------------------------------

    def _child_under(self, parent, name):
        """The child of ``parent`` containing ``name``."""
        chain = [name] + self.ancestors(name)
        for i, el in enumerate(chain):
            if self.elements[el].parent == parent:
                return el
        raise UnknownDestination(f"{name} is not inside {parent}")

    def level_graph(self, parent):
        """Co-level graph among the children of ``parent`` (None = root).

        Two children are adjacent when some physical node of one links to
        some physical node of the other; the edge cost is the cheapest
        such link.
        """
        kids = self.children(parent)
        graph = {k: {} for k in kids}
        for l in self.links:
            try:
                x = self._child_under(parent, l.a)
                y = self._child_under(parent, l.b)
            except UnknownDestination:
                continue
            if x == y:
                continue
            if l.cost < graph[x].get(y, math.inf):
                graph[x][y] = l.cost
                graph[y][x] = l.cost
        return graph

    def lowest_common(self, names):
        """Lowest network enclosing every name (None = root)."""
        chains = [[n] + self.ancestors(n) + [None] for n in names]
        common = set(chains[0][1:])
        for ch in chains[1:]:
            common &= set(ch[1:])
        for anc in chains[0][1:]:
            if anc in common:
                return anc
        return None

    def lift(self, names):
        """Map each name to the child of their lowest common network."""
        for n in names:
            if n not in self.elements:
                raise UnknownDestination(f"unknown element {n!r}")
        lca = self.lowest_common(names)
        return lca, [self._child_under(lca, n) for n in names]


# -- routing tables ---------------------------------------------------------------

def _first_hop(topo, owner, me, dest, cache):
    """First physical hop from ``owner`` (inside ``me``) into adjacent ``dest``."""
    best = None
    for u in topo.physical(me):
        for v in topo.neighbors(u):
            if not topo.contains(dest, v):
                continue
            inner = physical_chain(topo, owner, u, cache)
            cost = chain_cost(topo, inner) + topo.link(u, v).cost
            hop = inner[1] if len(inner) > 1 else v
            key = (cost, hop, u, v)
            if best is None or key < best:
                best = key
    if best is None:
        raise Unreachable(f"{me} has no link into {dest}")
    return best[1]


def build_tables(topo):
    """Per-node routing tables with hierarchical visibility.

    Raises Unreachable listing every (viewer, destination) pair that has
    no path at the viewer's level.
    """
    tables = {}
    unreachable = []
    cache = {}
    for owner in topo.nodes():
        chain = [owner] + topo.ancestors(owner)
        levels = topo.ancestors(owner) + [None]
        entries = {}
        for k, anc in enumerate(levels):
            me = chain[k]
            paths = dijkstra(topo.level_graph(anc), me)
            for dest in topo.children(anc):
                if dest == me:
                    continue
                if dest not in paths:
                    unreachable.append((owner, dest))
                    continue
                hop = paths[dest][1][1]
                if hop != dest:
                    entries[dest] = RouteEntry(VIA, hop)
                elif k == 0 and topo.is_physical(dest) and topo.link(owner, dest):
                    entries[dest] = RouteEntry(DIRECT)
                else:
                    entries[dest] = RouteEntry(VIA, _first_hop(topo, owner, me, dest, cache))
            if anc is not None:
                own = PROCESS_LOCALLY if topo.is_gateway(owner, anc) else LOCAL
                entries[anc] = RouteEntry(own)
        ordered = sorted(entries, key=lambda d: (-topo.depth(d), d))
        tables[owner] = RoutingTable(owner, {d: entries[d] for d in ordered})
    if unreachable:
        listing = ", ".join(f"{a}->{b}" for a, b in sorted(set(unreachable)))
        raise Unreachable(f"disconnected topology: {listing}")
    return tables


def format_tables(tables):
    return "".join(tables[o].format() for o in sorted(tables))


def resolve_destination(topo, tables, node, target):
    """Name under which ``node`` sees ``target``."""
    if target not in topo:
        raise UnknownDestination(f"unknown destination {target!r}")
    if target == node:
        return node
    table = tables[node]
    for name in [target] + topo.ancestors(target):
        if name in table:
            return name
    raise UnknownDestination(f"{target} is not visible from {node}")


def next_hop(topo, tables, node, target):
    """Physical neighbour to forward toward ``target``; None when arrived.

    "Arrived" covers ``target == node`` and targets naming one of the
    node's own enclosing networks.
    """
    seen = set()
    name = resolve_destination(topo, tables, node, target)
    while True:
        if name == node:
            return None
        entry = tables[node][name]
        if entry.kind == DIRECT:
            return name
        if entry.kind in (LOCAL, PROCESS_LOCALLY):
            return None
        if topo.is_physical(entry.via) and topo.link(node, entry.via):
            return entry.via
        if entry.via in seen:
            raise Unreachable(f"routing loop at {node} toward {target}")
        seen.add(name)
        name = entry.via


def forward_path(topo, tables, src, dst, limit=None):
    """Hop-by-hop walk of the tables from physical ``src`` to ``dst``."""
    limit = limit or len(topo.elements) + 1
    path = [src]
    cur = src
    while True:
        hop = next_hop(topo, tables, cur, dst)
        if hop is None:
            return path
        path.append(hop)
        cur = hop
        if len(path) > limit:
            raise Unreachable(f"no loop-free route {src}->{dst}")


# -- path planning ----------------------------------------------------------------

def chain_cost(topo, chain):
    return sum(topo.link(a, b).cost for a, b in zip(chain, chain[1:]))


def select_path(topo, src, dst):
    """Cheapest chain of co-level elements from ``src`` to ``dst``."""
    lca, (a, b) = topo.lift([src, dst])
    if a == b:
        return [a]
    paths = dijkstra(topo.level_graph(lca), a)
    if b not in paths:
        raise Unreachable(f"no path from {src} to {dst}")
    return list(paths[b][1])


def physical_chain(topo, src, dst, cache=None):
    """Physical node chain from ``src`` to ``dst`` by recursive expansion.

    The co-level path is chosen at the lowest common network, then each
    element on it is crossed using its own internal routing.
    """
    if cache is not None and (src, dst) in cache:
        return cache[(src, dst)]
    if src == dst:
        return [src]
    level = select_path(topo, src, dst)
    out = []
    cur = src
    for x, y in zip(level, level[1:]):
        best = None
        for u in topo.physical(x):
            for v in topo.neighbors(u):
                if not topo.contains(y, v):
                    continue
                inner = physical_chain(topo, cur, u, cache)
                key = (chain_cost(topo, inner) + topo.link(u, v).cost, inner, v)
                if best is None or key < best:
                    best = key
        if best is None:
            raise Unreachable(f"no link from {x} into {y}")
        out.extend(best[1])
        cur = best[2]
    out.extend(physical_chain(topo, cur, dst, cache))
    if cache is not None:
        cache[(src, dst)] = out
    return out


def select_center(topo, targets):
    """Element minimising the summed co-level path cost to all targets."""
    names = sorted(set(targets))
    if len(names) == 1:
        return names[0]
    lca, lifted = topo.lift(names)
    graph = topo.level_graph(lca)
    best = None
    for cand in topo.children(lca):
        paths = dijkstra(graph, cand)
        total = 0.0
        for t in lifted:
            if t not in paths:
                raise Unreachable(f"{t} unreachable from {cand}")
            total += paths[t][0]
        if best is None or (total, cand) < best:
            best = (total, cand)
    return best[1]


@dataclass(frozen=True)
class Hop:
    """An elementary link between adjacent chain nodes."""

    a: str
    b: str


@dataclass(frozen=True)
class Swap:
    """Entanglement swap at ``node`` joining the spans of ``left`` and ``right``."""

    node: str
    left: object
    right: object


def swap_order(chain):
    """Balanced swap nesting: split at the middle node, left-biased."""
    chain = list(chain)
    if len(chain) < 2:
        raise ValueError("a chain needs at least two nodes")
    if len(chain) == 2:
        return Hop(chain[0], chain[1])
    mid = (len(chain) - 1) // 2
    return Swap(chain[mid], swap_order(chain[: mid + 1]), swap_order(chain[mid:]))


def leaves(tree):
    if isinstance(tree, Hop):
        return [tree]
    return leaves(tree.left) + leaves(tree.right)


def swap_nodes(tree):
    """Swap nodes in execution (post-)order."""
    if isinstance(tree, Hop):
        return []
    return swap_nodes(tree.left) + swap_nodes(tree.right) + [tree.node]
