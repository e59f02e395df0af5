"""Multicast networks: model, benchmark builders, block layout, and oracle.

A :class:`Network` is a directed acyclic multigraph of unit-capacity links.
Parallel links are separate entries with distinct integer ids. The
feasibility oracle decides exactly, via max-flow on a constrained line
graph, whether a genotype's link states admit rate ``R`` to every sink.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

__all__ = [
    "Link",
    "Network",
    "NetworkError",
    "TopologyParseError",
    "BlockSpec",
    "BlockLayout",
    "build_butterfly",
    "build_butterfly_prime",
    "build_cascade",
    "build_dense",
    "build_named",
    "load_topology",
    "emit_topology",
    "block_layout",
    "search_space_size",
    "longest_path",
    "max_flow",
    "oracle_feasible",
]

MAX_CASCADE_DEPTH = 16


class NetworkError(ValueError):
    """A network violates one of the model invariants."""


class TopologyParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def node_sort_key(node: str):
    """Numeric ids sort numerically, everything else lexicographically after."""
    return (0, int(node), "") if node.isdigit() else (1, 0, node)


@dataclass(frozen=True)
class Link:
    id: int
    tail: str
    head: str


@dataclass(frozen=True, eq=False)
class Network:
    nodes: tuple[str, ...]
    links: tuple[Link, ...]
    source: str
    sinks: tuple[str, ...]
    rate: int

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(set(self.nodes), key=node_sort_key)))
        object.__setattr__(self, "sinks", tuple(sorted(set(self.sinks), key=node_sort_key)))
        for i, link in enumerate(self.links):
            if link.id != i:
                raise NetworkError("link ids must be 0..L-1 in order")
        self._validate()

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], source: str, sinks: Sequence[str],
                   rate: int | None = None, nodes: Iterable[str] = ()) -> "Network":
        """Build a network; ``rate=None`` means the largest achievable rate."""
        edges = [(str(u), str(v)) for u, v in edges]
        links = tuple(Link(i, u, v) for i, (u, v) in enumerate(edges))
        all_nodes = set(map(str, nodes)) | {str(source)} | {str(t) for t in sinks}
        for u, v in edges:
            all_nodes.update((u, v))
        if rate is None:
            # every sink is reachable, so rate 1 always validates
            probe = cls(tuple(all_nodes), links, str(source), tuple(map(str, sinks)), rate=1)
            rate = probe.min_cut()
        return cls(tuple(all_nodes), links, str(source), tuple(map(str, sinks)), rate)

    def _validate(self) -> None:
        node_set = set(self.nodes)
        if self.source not in node_set:
            raise NetworkError(f"source {self.source!r} is not a node")
        if not self.sinks:
            raise NetworkError("sink set is empty")
        if self.source in self.sinks:
            raise NetworkError("the source cannot also be a sink")
        for link in self.links:
            if link.tail == link.head:
                raise NetworkError(f"self-loop at {link.tail!r}")
        if self.in_links[self.source]:
            raise NetworkError("source has incoming links")
        # topo_order raises on cycles
        self.topo_order
        reach = self._reachable()
        unreachable = [n for n in self.nodes if n not in reach]
        if unreachable:
            bad = [t for t in self.sinks if t not in reach]
            if bad:
                raise NetworkError(f"sink(s) unreachable from source: {', '.join(bad)}")
            raise NetworkError(f"node(s) unreachable from source: {', '.join(unreachable)}")
        if self.rate < 1:
            raise NetworkError("rate must be a positive integer")
        cut = self.min_cut()
        if self.rate > cut:
            raise NetworkError(f"rate {self.rate} unachievable: min over sinks of max-flow is {cut}")

    def _reachable(self) -> set[str]:
        seen = {self.source}
        queue = deque([self.source])
        while queue:
            u = queue.popleft()
            for lid in self.out_links[u]:
                v = self.links[lid].head
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    @cached_property
    def in_links(self) -> dict[str, tuple[int, ...]]:
        ins: dict[str, list[int]] = {n: [] for n in self.nodes}
        for link in self.links:
            ins[link.head].append(link.id)
        return {n: tuple(v) for n, v in ins.items()}

    @cached_property
    def out_links(self) -> dict[str, tuple[int, ...]]:
        outs: dict[str, list[int]] = {n: [] for n in self.nodes}
        for link in self.links:
            outs[link.tail].append(link.id)
        return {n: tuple(v) for n, v in outs.items()}

    @cached_property
    def topo_order(self) -> tuple[str, ...]:
        """Kahn's algorithm, smallest node key first among ready nodes."""
        import heapq

        indeg = {n: len(self.in_links[n]) for n in self.nodes}
        ready = [(node_sort_key(n), n) for n in self.nodes if indeg[n] == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            _, u = heapq.heappop(ready)
            order.append(u)
            for lid in self.out_links[u]:
                v = self.links[lid].head
                indeg[v] -= 1
                if indeg[v] == 0:
                    heapq.heappush(ready, (node_sort_key(v), v))
        if len(order) != len(self.nodes):
            stuck = sorted((n for n in self.nodes if indeg[n] > 0), key=node_sort_key)
            raise NetworkError(f"graph has a cycle through {', '.join(stuck)}")
        return tuple(order)

    @cached_property
    def depth(self) -> dict[str, int]:
        """Longest path length (in links) from the source to every node."""
        d = {n: 0 for n in self.nodes}
        for u in self.topo_order:
            for lid in self.out_links[u]:
                v = self.links[lid].head
                d[v] = max(d[v], d[u] + 1)
        return d

    @cached_property
    def merging_nodes(self) -> tuple[str, ...]:
        """Nodes with >= 2 inputs and >= 1 output, in topological order."""
        return tuple(n for n in self.topo_order if len(self.in_links[n]) >= 2 and self.out_links[n])

    def min_cut(self) -> int:
        """min over sinks of the unconstrained source-to-sink max-flow."""
        graph = _LineGraph(self, None)
        return min(graph.max_flow(t) for t in self.sinks)

    def with_rate(self, rate: int) -> "Network":
        return Network(self.nodes, self.links, self.source, self.sinks, rate)

    def relabel(self, mapping: dict[str, str]) -> "Network":
        edges = [(mapping.get(l.tail, l.tail), mapping.get(l.head, l.head)) for l in self.links]
        return Network.from_edges(edges, mapping.get(self.source, self.source),
                                  [mapping.get(t, t) for t in self.sinks], self.rate,
                                  nodes=[mapping.get(n, n) for n in self.nodes])

    def __repr__(self) -> str:
        return (f"Network({len(self.nodes)} nodes, {len(self.links)} links, "
                f"source={self.source!r}, sinks={len(self.sinks)}, R={self.rate})")


# -- builders -----------------------------------------------------------------

_BUTTERFLY_EDGES = [
    ("s", "x"), ("s", "y"), ("x", "z"), ("y", "z"), ("x", "t1"),
    ("y", "t2"), ("z", "w"), ("w", "t1"), ("w", "t2"),
]


def build_butterfly() -> Network:
    return Network.from_edges(_BUTTERFLY_EDGES, "s", ["t1", "t2"], rate=2)


def build_butterfly_prime() -> Network:
    """Butterfly whose bottleneck z->w is doubled into two parallel links."""
    edges = list(_BUTTERFLY_EDGES)
    edges.insert(edges.index(("z", "w")) + 1, ("z", "w"))
    return Network.from_edges(edges, "s", ["t1", "t2"], rate=2)


def _copy_edges(src: str, c: int) -> list[tuple[str, str]]:
    x, y, z, w = f"x{c}", f"y{c}", f"z{c}", f"w{c}"
    t1, t2 = f"t{2 * c}", f"t{2 * c + 1}"
    return [(src, x), (src, y), (x, z), (y, z), (x, t1), (y, t2),
            (z, w), (z, w), (w, t1), (w, t2)]


def build_cascade(depth: int) -> Network:
    """Full binary tree of ``2^depth - 1`` copies of the doubled butterfly.

    Copies are numbered in heap order (root = 1, children of c are 2c and
    2c+1); copy c owns nodes ``x{c} y{c} z{c} w{c}`` and its two sinks are
    ``t{2c}`` and ``t{2c+1}``, which serve as the sources of its children.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if depth > MAX_CASCADE_DEPTH:
        raise ValueError(f"depth {depth} exceeds the supported maximum {MAX_CASCADE_DEPTH}")
    edges = []
    for c in range(1, 2 ** depth):
        src = "s" if c == 1 else f"t{c}"
        edges.extend(_copy_edges(src, c))
    sinks = [f"t{i}" for i in range(2 ** depth, 2 ** (depth + 1))]
    return Network.from_edges(edges, "s", sinks, rate=2)


def build_dense(n: int, num_sinks: int, rate: int | None = None) -> Network:
    """Nodes 1..n with a link i->j for every i<j; sinks are the last nodes."""
    if num_sinks < 1:
        raise ValueError("num_sinks must be >= 1")
    if n < num_sinks + 2:
        raise ValueError(f"need n >= num_sinks + 2, got n={n}, num_sinks={num_sinks}")
    edges = [(str(i), str(j)) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    sinks = [str(i) for i in range(n - num_sinks + 1, n + 1)]
    return Network.from_edges(edges, "1", sinks, rate=rate)


def build_named(name: str) -> Network:
    """Builtin topology from a selector such as ``cascade:4`` or ``dense:15:10``."""
    parts = name.strip().split(":")
    kind, args = parts[0].lower(), parts[1:]
    try:
        if kind == "butterfly" and not args:
            return build_butterfly()
        if kind in ("butterfly_prime", "butterfly2", "bprime") and not args:
            return build_butterfly_prime()
        if kind == "cascade" and len(args) == 1:
            return build_cascade(int(args[0]))
        if kind == "dense" and len(args) in (2, 3):
            rate = int(args[2]) if len(args) == 3 else None
            return build_dense(int(args[0]), int(args[1]), rate)
    except ValueError as exc:
        if isinstance(exc, NetworkError):
            raise
        raise ValueError(f"bad topology selector {name!r}: {exc}") from None
    raise ValueError(f"unknown topology selector {name!r}")


# -- topology file --------------------------------------------------------------

_TOKEN = re.compile(r"^[^\s#]+$")


def load_topology(text: str) -> Network:
    source = None
    sinks: list[str] | None = None
    rate = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        if key == "source":
            if len(args) != 1:
                raise TopologyParseError(lineno, "'source' takes exactly one node id")
            if source is not None:
                raise TopologyParseError(lineno, "duplicate 'source' line")
            source = args[0]
        elif key == "sinks":
            if not args:
                raise TopologyParseError(lineno, "'sinks' needs at least one node id")
            if sinks is not None:
                raise TopologyParseError(lineno, "duplicate 'sinks' line")
            sinks = args
        elif key == "rate":
            if len(args) != 1 or not args[0].isdigit() or int(args[0]) < 1:
                raise TopologyParseError(lineno, "'rate' takes one positive integer")
            if rate is not None:
                raise TopologyParseError(lineno, "duplicate 'rate' line")
            rate = int(args[0])
        elif key == "link":
            if len(args) != 2:
                raise TopologyParseError(lineno, "'link' takes exactly two node ids")
            edges.append((args[0], args[1]))
        else:
            raise TopologyParseError(lineno, f"unknown directive {key!r}")
    if source is None:
        raise TopologyParseError(0, "missing 'source' line")
    if sinks is None:
        raise TopologyParseError(0, "missing 'sinks' line")
    if rate is None:
        raise TopologyParseError(0, "missing 'rate' line")
    return Network.from_edges(edges, source, sinks, rate)


def emit_topology(net: Network) -> str:
    lines = [
        f"source {net.source}",
        "sinks " + " ".join(net.sinks),
        f"rate {net.rate}",
    ]
    for link in sorted(net.links, key=lambda l: (node_sort_key(l.tail), node_sort_key(l.head))):
        lines.append(f"link {link.tail} {link.head}")
    return "\n".join(lines) + "\n"


# -- block layout ----------------------------------------------------------------

@dataclass(frozen=True)
class BlockSpec:
    """One block: the states of ``inputs`` onto the outgoing link ``out_link``."""

    node: str
    out_link: int
    inputs: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.inputs)


@dataclass(frozen=True)
class BlockLayout:
    blocks: tuple[BlockSpec, ...]
    fingerprint: str = field(compare=False, default="")

    def __len__(self) -> int:
        return len(self.blocks)

    @cached_property
    def block_of_link(self) -> dict[int, int]:
        return {b.out_link: i for i, b in enumerate(self.blocks)}

    @cached_property
    def ks(self) -> tuple[int, ...]:
        return tuple(b.k for b in self.blocks)

    def node_degrees(self) -> dict[str, tuple[int, int]]:
        """Merging node -> (d_in, d_out)."""
        out: dict[str, tuple[int, int]] = {}
        for b in self.blocks:
            d_in, d_out = out.get(b.node, (b.k, 0))
            out[b.node] = (d_in, d_out + 1)
        return out


def block_layout(net: Network) -> BlockLayout:
    blocks = []
    for v in net.merging_nodes:
        ins = tuple(sorted(net.in_links[v]))
        for e in sorted(net.out_links[v]):
            blocks.append(BlockSpec(v, e, ins))
    fp = ";".join(f"{b.node}:{b.out_link}:{','.join(map(str, b.inputs))}" for b in blocks)
    return BlockLayout(tuple(blocks), fingerprint=fp)


def search_space_size(layout: BlockLayout) -> int:
    m = 1
    for d_in, d_out in layout.node_degrees().values():
        m *= (d_in + 2) ** d_out
    return m


def longest_path(net: Network) -> int:
    return max(net.depth[t] for t in net.sinks)


# -- max-flow oracle --------------------------------------------------------------

class _LineGraph:
    """Node-split line graph of ``net`` for unit-capacity max-flow.

    Link e becomes vertices ``2e`` (in) and ``2e+1`` (out) joined by a
    capacity-1 edge. ``allowed(e1, e2)`` filters the transitions through
    merging nodes; ``None`` allows everything.
    """

    def __init__(self, net: Network, allowed):
        self.net = net
        n_links = len(net.links)
        self.super_source = 2 * n_links
        self.collector = {t: 2 * n_links + 1 + i for i, t in enumerate(net.sinks)}
        self.n_vertices = 2 * n_links + 1 + len(net.sinks)
        self.base_edges: list[tuple[int, int]] = []
        for e in net.links:
            self.base_edges.append((2 * e.id, 2 * e.id + 1))
        for lid in net.out_links[net.source]:
            self.base_edges.append((self.super_source, 2 * lid))
        for v in net.nodes:
            for e_in in net.in_links[v]:
                for e_out in net.out_links[v]:
                    if allowed is None or allowed(e_in, e_out):
                        self.base_edges.append((2 * e_in + 1, 2 * e_out))

    def max_flow(self, sink: str, limit: int | None = None) -> int:
        edges = self.base_edges + [(2 * lid + 1, self.collector[sink]) for lid in self.net.in_links[sink]]
        return max_flow(self.n_vertices, edges, self.super_source, self.collector[sink], limit)


def max_flow(n_vertices: int, edges: Sequence[tuple[int, int]], s: int, t: int,
             limit: int | None = None) -> int:
    """Unit-capacity max-flow by BFS augmenting paths (Edmonds-Karp).

    Stops early once the flow reaches ``limit``.
    """
    head: list[int] = []
    cap: list[int] = []
    adj: list[list[int]] = [[] for _ in range(n_vertices)]
    for u, v in edges:
        adj[u].append(len(head))
        head.append(v)
        cap.append(1)
        adj[v].append(len(head))
        head.append(u)
        cap.append(0)
    flow = 0
    while limit is None or flow < limit:
        parent_edge = [-1] * n_vertices
        parent_edge[s] = -2
        queue = deque([s])
        found = False
        while queue and not found:
            u = queue.popleft()
            for ei in adj[u]:
                v = head[ei]
                if cap[ei] and parent_edge[v] == -1:
                    parent_edge[v] = ei
                    if v == t:
                        found = True
                        break
                    queue.append(v)
        if not found:
            break
        v = t
        while v != s:
            ei = parent_edge[v]
            cap[ei] -= 1
            cap[ei ^ 1] += 1
            v = head[ei ^ 1]
        flow += 1
    return flow


def _active_inputs(layout: BlockLayout, states: Sequence[int]) -> dict[int, set[int]]:
    from .genome import active_inputs

    return {b.out_link: active_inputs(b, s) for b, s in zip(layout.blocks, states)}


def oracle_feasible(net: Network, genotype, layout: BlockLayout | None = None) -> bool:
    """Exact feasibility: can every sink receive rate R under these link states?

    ``genotype`` is a :class:`ncga.genome.Genotype` or a plain sequence of
    block states ordered like ``block_layout(net)``.
    """
    layout = block_layout(net) if layout is None else layout
    states = getattr(genotype, "states", genotype)
    fp = getattr(genotype, "fingerprint", None)
    if (fp is not None and fp != layout.fingerprint) or len(states) != len(layout):
        raise ValueError("genotype does not match the network's block layout")
    active = _active_inputs(layout, states)

    def allowed(e_in: int, e_out: int) -> bool:
        acts = active.get(e_out)
        return acts is None or e_in in acts

    graph = _LineGraph(net, allowed)
    return all(graph.max_flow(t, limit=net.rate) >= net.rate for t in net.sinks)
