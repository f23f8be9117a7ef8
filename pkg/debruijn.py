"""
De Bruijn Graph and Multiplicity Labeling

Builds G(Y) from a k-mer set: nodes are k-mers, each (k+1)-mer of Y is a
directed edge from its k-prefix to its k-suffix. Because Y is a set there are
no parallel edges.

Multiplicity labeling infers how many times each node is traversed by the
source paths using only the graph and m. It succeeds when the sources have
no intra-sequence repeat, no overlapping double repeat and no boundary repeat;
anything else is surfaced as StructureViolation so callers can fall back to
exhaustive enumeration.

Dump format (one edge per line, sorted):
    PREFIX -> SUFFIX [mult=W]
where W is the traversal count the labels imply for that edge, or '?' when
no labeling is supplied.
"""

import logging
from collections import Counter, deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from core_model import KmerSet, SourceSet, format_kmer

logger = logging.getLogger("debruijn")

MAX_LABEL_DEGREE = 2


class StructureViolation(Exception):
    """Raised when a graph cannot be labeled under the no-repeat-structure assumptions."""
    pass


# =============================================================================
# GRAPH
# =============================================================================

class DeBruijnGraph:
    """
    Immutable de Bruijn graph over packed k-mers.

    Adjacency lists are sorted by node value so every traversal is
    deterministic.
    """

    def __init__(self, k: int, edges: Iterable[int]):
        self.k = k
        self._mask = (1 << k) - 1
        self.edges: Tuple[int, ...] = tuple(sorted(set(edges)))

        successors: Dict[int, List[int]] = {}
        predecessors: Dict[int, List[int]] = {}
        for edge in self.edges:
            head, tail = self.prefix(edge), self.suffix(edge)
            successors.setdefault(head, []).append(tail)
            successors.setdefault(tail, [])
            predecessors.setdefault(tail, []).append(head)
            predecessors.setdefault(head, [])

        self.nodes: Tuple[int, ...] = tuple(sorted(successors))
        self._out = {v: tuple(sorted(successors[v])) for v in self.nodes}
        self._in = {v: tuple(sorted(predecessors[v])) for v in self.nodes}

    def prefix(self, edge: int) -> int:
        return edge >> 1

    def suffix(self, edge: int) -> int:
        return edge & self._mask

    def edge_between(self, head: int, tail: int) -> int:
        return (head << 1) | (tail & 1)

    def successors(self, node: int) -> Tuple[int, ...]:
        return self._out[node]

    def predecessors(self, node: int) -> Tuple[int, ...]:
        return self._in[node]

    def out_degree(self, node: int) -> int:
        return len(self._out[node])

    def in_degree(self, node: int) -> int:
        return len(self._in[node])

    def sources(self) -> List[int]:
        """Nodes of in-degree 0."""
        return [v for v in self.nodes if not self._in[v]]

    def sinks(self) -> List[int]:
        """Nodes of out-degree 0."""
        return [v for v in self.nodes if not self._out[v]]

    def has_self_loop(self, node: int) -> bool:
        return node in self._out[node]

    def __contains__(self, node: int) -> bool:
        return node in self._out

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"DeBruijnGraph(k={self.k}, nodes={len(self.nodes)}, edges={len(self.edges)})"

    def label(self, node: int) -> str:
        return format_kmer(node, self.k)


@dataclass(frozen=True)
class MultiplicityMap:
    """Node -> multiplicity (number of source-path traversals)."""
    mu: Mapping[int, int]

    def __getitem__(self, node: int) -> int:
        return self.mu[node]

    def get(self, node: int, default: int = 0) -> int:
        return self.mu.get(node, default)

    def items(self):
        return sorted(self.mu.items())

    def __len__(self) -> int:
        return len(self.mu)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiplicityMap):
            return NotImplemented
        return dict(self.mu) == dict(other.mu)

    def max(self) -> int:
        return max(self.mu.values(), default=0)


def build_graph(y: KmerSet) -> DeBruijnGraph:
    """G(Y): nodes are the k-prefixes and k-suffixes of Y's (k+1)-mers."""
    if not len(y):
        raise ValueError("cannot build a graph from an empty k-mer set")
    return DeBruijnGraph(y.k, y.kmers)


def true_multiplicities(x: SourceSet, g: DeBruijnGraph, k: int) -> MultiplicityMap:
    """Ground truth: how many windows of X equal each node."""
    counts = Counter()
    for source in x:
        counts.update(source.windows(k))
    missing = [v for v in counts if v not in g]
    if missing:
        raise ValueError(f"{len(missing)} k-mers of X are not nodes of the graph")
    return MultiplicityMap({v: counts.get(v, 0) for v in g.nodes})


# =============================================================================
# LABELING
# =============================================================================

def _edge_weight(g: DeBruijnGraph, mu: Mapping[int, int], head: int) -> int:
    """Traversals of one out-edge of `head` implied by its multiplicity."""
    return mu[head] if g.out_degree(head) == 1 else 1


def edge_weights(g: DeBruijnGraph, mu: MultiplicityMap) -> Dict[int, int]:
    """Per-edge traversal counts implied by node multiplicities."""
    return {e: _edge_weight(g, mu.mu, g.prefix(e)) for e in g.edges}


def _check_structure(g: DeBruijnGraph, m: int) -> None:
    for v in g.nodes:
        if g.in_degree(v) > MAX_LABEL_DEGREE or g.out_degree(v) > MAX_LABEL_DEGREE:
            raise StructureViolation(
                f"node {g.label(v)} has in/out degree {g.in_degree(v)}/{g.out_degree(v)}"
            )
        if g.has_self_loop(v):
            raise StructureViolation(f"self-loop at {g.label(v)}")
        for w in g.successors(v):
            if w != v and v in g.successors(w):
                raise StructureViolation(f"2-cycle between {g.label(v)} and {g.label(w)}")

    starts, ends = len(g.sources()), len(g.sinks())
    if starts != m or ends != m:
        raise StructureViolation(f"expected {m} start and end nodes, found {starts} and {ends}")


def label_multiplicities(g: DeBruijnGraph, m: int) -> MultiplicityMap:
    """
    Infer node multiplicities from the graph alone.

    Start nodes are labeled 1 and merge nodes (in-degree 2) are labeled 2.
    Labels then propagate forward: a node entered by a single edge inherits the
    traversal count of that edge, which is the predecessor's label when the
    predecessor has one out-edge and 1 when it splits. Seeding merge nodes
    directly keeps propagation moving through cycles formed by two repeats
    appearing in swapped order in different sources.

    After propagation every node must be labeled and flow must balance:
    merge nodes take exactly one traversal per in-edge, split nodes carry
    label 2, and end nodes carry label 1.
    """
    _check_structure(g, m)

    mu: Dict[int, int] = {}
    queue = deque()
    for v in g.nodes:
        if g.in_degree(v) == 0:
            mu[v] = 1
            queue.append(v)
        elif g.in_degree(v) == 2:
            mu[v] = 2
            queue.append(v)

    while queue:
        v = queue.popleft()
        if g.out_degree(v) == 2 and mu[v] != 2:
            raise StructureViolation(f"split node {g.label(v)} carries label {mu[v]}")
        weight = _edge_weight(g, mu, v)
        for w in g.successors(v):
            if g.in_degree(w) != 1:
                continue
            if w in mu:
                if mu[w] != weight:
                    raise StructureViolation(f"conflicting labels at {g.label(w)}")
                continue
            mu[w] = weight
            queue.append(w)

    unlabeled = [v for v in g.nodes if v not in mu]
    if unlabeled:
        raise StructureViolation(
            f"propagation did not reach {len(unlabeled)} node(s), first {g.label(unlabeled[0])}"
        )

    for v in g.nodes:
        if g.in_degree(v) == 2:
            inflow = sum(_edge_weight(g, mu, p) for p in g.predecessors(v))
            if inflow != 2:
                raise StructureViolation(f"merge node {g.label(v)} receives {inflow} traversals")
        if g.out_degree(v) == 0 and mu[v] != 1:
            raise StructureViolation(f"end node {g.label(v)} carries label {mu[v]}")

    logger.debug(f"[Labeling] {len(mu)} nodes labeled, {sum(1 for x in mu.values() if x == 2)} shared")
    return MultiplicityMap(mu)


def dump_graph(g: DeBruijnGraph, mu: Optional[MultiplicityMap] = None) -> str:
    """Textual dump, one 'PREFIX -> SUFFIX [mult=W]' line per edge."""
    weights = edge_weights(g, mu) if mu is not None else {}
    lines = []
    for edge in g.edges:
        weight = weights.get(edge, "?")
        lines.append(f"{g.label(g.prefix(edge))} -> {g.label(g.suffix(edge))} [mult={weight}]")
    return "".join(line + "\n" for line in lines)
