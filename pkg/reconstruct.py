"""
Reconstruction Search

Enumerates every multiset of m length-n binary strings whose (k+1)-mer set is
exactly a given Y. Each candidate string is a walk of exactly n-k edges on
G(Y) and the walks must jointly cover every edge at least once.

SEARCH:
- Walks are produced in non-decreasing string order, so each multiset is
  generated exactly once (duplicate strings are allowed).
- Pruning, all sound for arbitrary Y:
  * start nodes (in-degree 0) can only be entered as the first node of a walk,
    end nodes (out-degree 0) only as the last. When the uncovered edges at
    start or end nodes need every remaining walk, the current walk is forced
    to start or end there.
  * a walk forced to finish at an end node must reach one in exactly the
    remaining number of steps (precomputed length masks).
  * total traversals m(n-k) minus |Y| bounds how often edges may be reused.
  * uncovered edges must fit in the remaining walk capacity.
- Labeled mode: when multiplicity labels succeed and their edge weights add
  up to m(n-k), every reconstruction uses each edge exactly that often.  Each
  start node then hosts one walk built from unitigs (chains without
  branching) under those exact counts, and an expansion is one unitig step.
  Between walks the length masks are recomputed on the arcs with counts left:
  every unused start must still reach an end in exactly n-k steps and every
  such arc must hang off an unused start.
- A Budget caps found solutions and node expansions. Hitting the expansion
  cap leaves the result non-exhausted; result.raise_for_budget() turns that
  into BudgetExceeded.

CONFIGURATION:
- KMERLIMITS_MAX_EXPANSIONS: default expansion cap (1,000,000)
- KMERLIMITS_MAX_SOLUTIONS: default solution cap (2)
"""

import itertools
import logging
import os
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from core_model import BitSequence, ParameterError, KmerSet, SourceSet, extract_kmer_set
from ambiguity import find_swap_certificate
from debruijn import (
    DeBruijnGraph,
    MultiplicityMap,
    StructureViolation,
    build_graph,
    edge_weights,
    label_multiplicities,
    true_multiplicities,
)
from events import detect_A, detect_B, detect_C, detect_D

logger = logging.getLogger("reconstruct")

DEFAULT_MAX_EXPANSIONS = int(os.environ.get("KMERLIMITS_MAX_EXPANSIONS", "1000000"))
DEFAULT_MAX_SOLUTIONS = int(os.environ.get("KMERLIMITS_MAX_SOLUTIONS", "2"))
ORACLE_LIMIT = 24


class BudgetExceeded(Exception):
    """Raised when the expansion cap stopped a search before it finished."""
    pass


class PreconditionViolation(ValueError):
    """Raised when inputs do not satisfy an operation's requirements."""
    pass


class OracleTooLarge(ParameterError):
    """Raised when brute-force enumeration over 2^(m*n) tuples is requested for m*n > 24."""
    pass


class ReconstructionInvariantError(AssertionError):
    """Raised when a search contradicts a guaranteed property (e.g. misses the true X)."""
    pass


class Uniqueness(Enum):
    UNIQUE = "unique"
    AMBIGUOUS = "ambiguous"
    UNKNOWN = "unknown"


class StopReason(Enum):
    COMPLETE = "complete"
    SOLUTION_CAP = "solution_cap"
    EXPANSION_CAP = "expansion_cap"


@dataclass(frozen=True)
class Budget:
    """Search limits. None means unlimited."""
    max_solutions: Optional[int] = DEFAULT_MAX_SOLUTIONS
    max_expansions: Optional[int] = DEFAULT_MAX_EXPANSIONS

    @classmethod
    def unbounded(cls) -> "Budget":
        return cls(max_solutions=None, max_expansions=None)


@dataclass
class ReconstructionResult:
    """Outcome of enumerate_reconstructions."""
    solutions: List[SourceSet]
    exhausted: bool
    expansions: int
    stop_reason: StopReason = StopReason.COMPLETE
    labels: Optional[MultiplicityMap] = None
    label_agreement: Optional[bool] = None
    labeled_search: bool = False

    def raise_for_budget(self) -> None:
        if self.stop_reason is StopReason.EXPANSION_CAP:
            raise BudgetExceeded(
                f"expansion cap reached after {self.expansions} expansions "
                f"with {len(self.solutions)} solution(s)"
            )


# =============================================================================
# WALK SEARCH
# =============================================================================

def _longest_walks(g: DeBruijnGraph, cap: int) -> Dict[int, int]:
    """Longest walk length from each node, capped; nodes reaching a cycle get the cap."""
    remaining = {v: g.out_degree(v) for v in g.nodes}
    longest = {v: 0 for v in g.nodes}
    queue = deque(v for v in g.nodes if remaining[v] == 0)
    done = set()
    while queue:
        v = queue.popleft()
        done.add(v)
        for p in g.predecessors(v):
            longest[p] = min(cap, max(longest[p], longest[v] + 1))
            remaining[p] -= 1
            if remaining[p] == 0:
                queue.append(p)
    for v in g.nodes:
        if v not in done:
            longest[v] = cap
    return longest


def _end_masks(g: DeBruijnGraph, length: int) -> Dict[int, int]:
    """
    Bitmask per node: bit t is set when a walk of exactly t edges from the
    node finishes at an end node (t <= length).
    """
    full = (1 << (length + 1)) - 1
    masks = {v: (1 if g.out_degree(v) == 0 else 0) for v in g.nodes}
    queue = deque(v for v in g.nodes if masks[v])
    queued = set(queue)
    while queue:
        v = queue.popleft()
        queued.discard(v)
        shifted = (masks[v] << 1) & full
        for p in g.predecessors(v):
            updated = masks[p] | shifted
            if updated != masks[p]:
                masks[p] = updated
                if p not in queued:
                    queued.add(p)
                    queue.append(p)
    return masks


def _walks_to_sources(walks: List[Tuple[int, Tuple[int, ...]]], n: int) -> SourceSet:
    sources = []
    for start, bits in walks:
        value = start
        for bit in bits:
            value = (value << 1) | bit
        sources.append(BitSequence(value, n))
    return SourceSet(tuple(sources))


@dataclass
class _Frame:
    node: int
    tight: bool
    options: List[Tuple[int, int, int, bool]]
    cursor: int = 0
    applied: Optional[int] = None


class _WalkSearch:
    """Backtracking over m walks of fixed length on one graph."""

    def __init__(self, g: DeBruijnGraph, m: int, n: int, budget: Budget):
        self.g = g
        self.m = m
        self.n = n
        self.length = n - g.k
        self.budget = budget

        self.edge_index = {e: idx for idx, e in enumerate(g.edges)}
        self.uses = [0] * len(g.edges)
        self.out = {
            v: [(w & 1, w, self.edge_index[(v << 1) | (w & 1)]) for w in g.successors(v)]
            for v in g.nodes
        }
        start_nodes = set(g.sources())
        end_nodes = set(g.sinks())
        self.starts = sorted(start_nodes)
        self.from_start = [g.prefix(e) in start_nodes for e in g.edges]
        self.into_end = [g.suffix(e) in end_nodes for e in g.edges]

        self.uncovered = len(g.edges)
        self.start_need = sum(self.from_start)
        self.end_need = sum(self.into_end)
        self.slack = m * self.length - len(g.edges)
        self.waste = 0

        self.longest = _longest_walks(g, self.length)
        self.end_mask = _end_masks(g, self.length)

        self.walks: List[Tuple[int, Tuple[int, ...]]] = []
        self.solutions: List[SourceSet] = []
        self.expansions = 0
        self.stop: Optional[StopReason] = None

    # ---- bookkeeping ----

    def _apply(self, idx: int) -> None:
        if self.uses[idx] == 0:
            self.uncovered -= 1
            self.start_need -= self.from_start[idx]
            self.end_need -= self.into_end[idx]
        else:
            self.waste += 1
        self.uses[idx] += 1

    def _undo(self, idx: int) -> None:
        self.uses[idx] -= 1
        if self.uses[idx] == 0:
            self.uncovered += 1
            self.start_need += self.from_start[idx]
            self.end_need += self.into_end[idx]
        else:
            self.waste -= 1

    # ---- search ----

    def run(self) -> None:
        if self.slack < 0:
            return
        self._walk(0)

    def _walk(self, w: int) -> None:
        remaining_walks = self.m - w
        if self.start_need > remaining_walks or self.end_need > remaining_walks:
            return
        if self.uncovered > remaining_walks * self.length:
            return

        forced_start = self.start_need == remaining_walks
        forced_end = self.end_need == remaining_walks
        prev = self.walks[-1] if self.walks else None

        for start in self._start_candidates(prev, forced_start, forced_end):
            if self.stop is not None:
                return
            self._grow(w, start, prev, forced_start, forced_end)

    def _start_candidates(self, prev, forced_start: bool, forced_end: bool) -> List[int]:
        pool = self.starts if forced_start else self.g.nodes
        candidates = []
        for v in pool:
            if prev is not None and v < prev[0]:
                continue
            if self.longest[v] < self.length:
                continue
            if forced_end and not (self.end_mask[v] >> self.length) & 1:
                continue
            if forced_start and all(self.uses[idx] for _, _, idx in self.out[v]):
                continue
            candidates.append(v)
        return candidates

    def _options(self, node: int, remaining: int, tight: bool, depth: int,
                 prev, forced_start: bool, forced_end: bool) -> List[Tuple[int, int, int, bool]]:
        options = []
        after = remaining - 1
        for bit, child, idx in self.out[node]:
            child_tight = False
            if tight:
                floor_bit = prev[1][depth]
                if bit < floor_bit:
                    continue
                child_tight = bit == floor_bit
            covered = self.uses[idx] > 0
            if covered and self.waste >= self.slack:
                continue
            if depth == 0 and forced_start and covered:
                continue
            if forced_end:
                if not (self.end_mask[child] >> after) & 1:
                    continue
                if after == 0 and covered:
                    continue
            elif self.longest[child] < after:
                continue
            options.append((bit, child, idx, child_tight))
        return options

    def _grow(self, w: int, start: int, prev, forced_start: bool, forced_end: bool) -> None:
        tight = prev is not None and start == prev[0]
        bits: List[int] = []
        later_capacity = (self.m - w - 1) * self.length
        frames = [_Frame(start, tight, self._options(start, self.length, tight, 0, prev,
                                                     forced_start, forced_end))]
        while frames:
            top = frames[-1]
            depth = len(frames) - 1
            if self.stop is not None:
                self._pop(frames, bits)
                continue
            if depth == self.length:
                self._complete(w, start, bits)
                self._pop(frames, bits)
                continue
            if top.cursor >= len(top.options):
                self._pop(frames, bits)
                continue

            bit, child, idx, child_tight = top.options[top.cursor]
            top.cursor += 1

            self.expansions += 1
            if self.budget.max_expansions is not None and self.expansions > self.budget.max_expansions:
                self.stop = StopReason.EXPANSION_CAP
                continue

            self._apply(idx)
            remaining = self.length - depth - 1
            if self.uncovered > remaining + later_capacity or self.waste > self.slack:
                self._undo(idx)
                continue
            bits.append(bit)
            options = self._options(child, remaining, child_tight, depth + 1, prev,
                                    forced_start, forced_end) if remaining else []
            frames.append(_Frame(child, child_tight, options, applied=idx))

    def _pop(self, frames: List[_Frame], bits: List[int]) -> None:
        frame = frames.pop()
        if frame.applied is not None:
            self._undo(frame.applied)
            bits.pop()

    def _complete(self, w: int, start: int, bits: List[int]) -> None:
        self.walks.append((start, tuple(bits)))
        if w + 1 < self.m:
            self._walk(w + 1)
        elif self.uncovered == 0:
            self._record()
        self.walks.pop()

    def _record(self) -> None:
        self.solutions.append(_walks_to_sources(self.walks, self.n))
        logger.debug(f"[Search] solution {len(self.solutions)} after {self.expansions} expansions")
        cap = self.budget.max_solutions
        if cap is not None and len(self.solutions) >= cap:
            self.stop = StopReason.SOLUTION_CAP


# =============================================================================
# LABELED SEARCH
# =============================================================================

def label_gap(g: DeBruijnGraph, labels: MultiplicityMap, m: int, length: int) -> int:
    """
    Walk capacity m * length minus the traversals the labels imply.

    Labels succeed only with degrees and labels at most 2, so a doubly used
    edge sits inside a chain entered through two singly used edges. Any
    reconstruction's counts therefore exceed the label weights by a
    non-negative circulation. When the weights already add up to m walks of
    `length` edges that circulation is zero.

    At zero every reconstruction spends exactly the label weights. Below
    zero no reconstruction exists.
    """
    return m * length - sum(edge_weights(g, labels).values())


@dataclass
class _Arc:
    """A maximal chain of edges whose inner nodes have one way in and one way out."""
    tail: int
    head: int
    bits: Tuple[int, ...]
    count: int


class _LabeledSearch:
    """
    Backtracking over unitigs when every edge count is known.

    Each walk starts at its own start node (sorted) and spends exactly the
    labeled count of every arc. One expansion is one arc step, so a branch
    decision costs one expansion however long the chain behind it is.
    """

    def __init__(self, g: DeBruijnGraph, m: int, n: int, counts: Dict[int, int], budget: Budget):
        self.g = g
        self.m = m
        self.n = n
        self.length = n - g.k
        self.budget = budget

        self.starts = sorted(g.sources())
        self.arcs: List[_Arc] = []
        self.out: Dict[int, List[int]] = {}
        self.into: Dict[int, List[int]] = {}
        for v in g.nodes:
            if g.in_degree(v) == 1 and g.out_degree(v) == 1:
                continue
            self.out[v] = []
            self.into.setdefault(v, [])
            for w in g.successors(v):
                arc = self._trace(v, w, counts)
                self.out[v].append(len(self.arcs))
                self.into.setdefault(arc.head, []).append(len(self.arcs))
                self.arcs.append(arc)
        self.remaining = [arc.count for arc in self.arcs]
        self.ends = [v for v in self.out if not self.out[v]]

        self.walks: List[Tuple[int, Tuple[int, ...]]] = []
        self.solutions: List[SourceSet] = []
        self.expansions = 0
        self.stop: Optional[StopReason] = None

    def _trace(self, v: int, w: int, counts: Dict[int, int]) -> _Arc:
        count = counts[self.g.edge_between(v, w)]
        bits = [w & 1]
        while self.g.in_degree(w) == 1 and self.g.out_degree(w) == 1:
            w = self.g.successors(w)[0]
            bits.append(w & 1)
        return _Arc(tail=v, head=w, bits=tuple(bits), count=count)

    def run(self) -> None:
        self._walk(0)

    def _walk(self, w: int) -> None:
        if w == self.m:
            if not any(self.remaining):
                self._record()
            return
        if w and not self._residual_reachable(w):
            return
        masks = self._residual_masks()
        if any(not (masks[s] >> self.length) & 1 for s in self.starts[w:]):
            return
        self._grow(w, self.starts[w], masks)

    def _residual_reachable(self, w: int) -> bool:
        """Every arc with traversals left must hang off a start not yet used."""
        seen = set()
        stack = list(self.starts[w:])
        while stack:
            v = stack.pop()
            for a in self.out[v]:
                if self.remaining[a] and a not in seen:
                    seen.add(a)
                    stack.append(self.arcs[a].head)
        return len(seen) == sum(1 for left in self.remaining if left)

    def _residual_masks(self) -> Dict[int, int]:
        """Exact lengths to an end per branch node, over arcs with traversals left."""
        full = (1 << (self.length + 1)) - 1
        masks = {v: 0 for v in self.out}
        for v in self.ends:
            masks[v] = 1
        queue = deque(self.ends)
        queued = set(queue)
        while queue:
            v = queue.popleft()
            queued.discard(v)
            for a in self.into[v]:
                if not self.remaining[a]:
                    continue
                arc = self.arcs[a]
                updated = masks[arc.tail] | ((masks[v] << len(arc.bits)) & full)
                if updated != masks[arc.tail]:
                    masks[arc.tail] = updated
                    if arc.tail not in queued:
                        queued.add(arc.tail)
                        queue.append(arc.tail)
        return masks

    def _options(self, node: int, depth: int, masks: Dict[int, int]) -> List[int]:
        options = []
        for a in self.out[node]:
            if not self.remaining[a]:
                continue
            arc = self.arcs[a]
            reached = depth + len(arc.bits)
            if reached > self.length or not (masks[arc.head] >> (self.length - reached)) & 1:
                continue
            options.append(a)
        return options

    def _grow(self, w: int, start: int, masks: Dict[int, int]) -> None:
        bits: List[int] = []
        frames = [_Frame(start, False, self._options(start, 0, masks))]
        while frames:
            top = frames[-1]
            if self.stop is not None:
                self._pop(frames, bits)
                continue
            if len(bits) == self.length:
                self.walks.append((start, tuple(bits)))
                self._walk(w + 1)
                self.walks.pop()
                self._pop(frames, bits)
                continue
            if top.cursor >= len(top.options):
                self._pop(frames, bits)
                continue

            a = top.options[top.cursor]
            top.cursor += 1

            self.expansions += 1
            if self.budget.max_expansions is not None and self.expansions > self.budget.max_expansions:
                self.stop = StopReason.EXPANSION_CAP
                continue

            arc = self.arcs[a]
            self.remaining[a] -= 1
            bits.extend(arc.bits)
            frames.append(_Frame(arc.head, False, self._options(arc.head, len(bits), masks), applied=a))

    def _pop(self, frames: List[_Frame], bits: List[int]) -> None:
        frame = frames.pop()
        if frame.applied is not None:
            self.remaining[frame.applied] += 1
            del bits[len(bits) - len(self.arcs[frame.applied].bits):]

    def _record(self) -> None:
        self.solutions.append(_walks_to_sources(self.walks, self.n))
        logger.debug(f"[Search] labeled solution {len(self.solutions)} after {self.expansions} expansions")
        cap = self.budget.max_solutions
        if cap is not None and len(self.solutions) >= cap:
            self.stop = StopReason.SOLUTION_CAP


def _check_labels(g: DeBruijnGraph, labels: MultiplicityMap, solutions: List[SourceSet]) -> bool:
    for solution in solutions:
        if true_multiplicities(solution, g, g.k) != labels:
            return False
    return True


def enumerate_reconstructions(y: KmerSet, m: int, n: int, budget: Optional[Budget] = None) -> ReconstructionResult:
    """
    All source multisets X' with Y(X') = y, up to the budget.

    When labeling succeeds and its weights fill the m walks exactly, the
    search runs over unitigs with those weights as exact edge counts.
    Otherwise it runs edge by edge under cover-at-least-once constraints.
    Solutions come out in sorted order of their sorted string tuples.
    """
    budget = budget or Budget()
    if m < 1:
        raise PreconditionViolation(f"m must be at least 1, got {m}")
    if y.k + 1 > n:
        raise PreconditionViolation(f"k+1={y.k + 1} exceeds n={n}")
    if not len(y):
        raise PreconditionViolation("empty k-mer set")

    g = build_graph(y)
    length = n - y.k
    labels = None
    try:
        labels = label_multiplicities(g, m)
    except StructureViolation as e:
        logger.debug(f"[Search] labeling unavailable: {e}")

    gap = label_gap(g, labels, m, length) if labels is not None else None
    if gap == 0:
        search = _LabeledSearch(g, m, n, edge_weights(g, labels), budget)
    else:
        search = _WalkSearch(g, m, n, budget)
    if gap is None or gap >= 0:
        search.run()
    else:
        logger.debug(f"[Search] labels need {-gap} more traversals than {m} walks hold")

    agreement = None
    if labels is not None and search.solutions:
        agreement = _check_labels(g, labels, search.solutions)

    stop = search.stop or StopReason.COMPLETE
    logger.info(
        f"[Search] nodes={len(g.nodes)} edges={len(g.edges)} m={m} n={n} labeled={gap == 0} "
        f"solutions={len(search.solutions)} expansions={search.expansions} stop={stop.value}"
    )
    return ReconstructionResult(
        solutions=search.solutions,
        exhausted=stop is StopReason.COMPLETE,
        expansions=search.expansions,
        stop_reason=stop,
        labels=labels,
        label_agreement=agreement,
        labeled_search=gap == 0,
    )


# =============================================================================
# UNIQUENESS
# =============================================================================

def is_unique(x: SourceSet, k: int, budget: Optional[Budget] = None) -> Uniqueness:
    """
    Decide whether Y(x) determines x. A constructive swap certificate settles
    ambiguity without searching; otherwise the search runs with a solution cap
    of two.
    """
    budget = budget or Budget()
    if find_swap_certificate(x, k) is not None:
        return Uniqueness.AMBIGUOUS

    capped = Budget(max_solutions=2, max_expansions=budget.max_expansions)
    result = enumerate_reconstructions(extract_kmer_set(x, k), x.m, x.n, capped)
    if len(result.solutions) >= 2:
        return Uniqueness.AMBIGUOUS
    if result.exhausted:
        if not result.solutions or result.solutions[0] != x:
            raise ReconstructionInvariantError("exhaustive search did not return the true sources")
        return Uniqueness.UNIQUE
    return Uniqueness.UNKNOWN


# =============================================================================
# BRUTE FORCE ORACLE
# =============================================================================

def brute_force_oracle(y: KmerSet, m: int, n: int) -> List[SourceSet]:
    """
    Independent ground truth: test every multiset of m strings of length n.
    Only strings whose own windows lie inside Y can take part, so candidates
    are filtered first and multisets drawn from them.
    """
    if m * n > ORACLE_LIMIT:
        raise OracleTooLarge(f"m*n={m * n} exceeds {ORACLE_LIMIT}")
    if y.k + 1 > n:
        raise PreconditionViolation(f"k+1={y.k + 1} exceeds n={n}")

    width = y.k + 1
    candidates = []
    for value in range(1 << n):
        windows = BitSequence(value, n).windows(width)
        if all(w in y.kmers for w in windows):
            candidates.append((value, frozenset(windows)))

    solutions = []
    for combo in itertools.combinations_with_replacement(candidates, m):
        covered = frozenset().union(*(windows for _, windows in combo))
        if covered == y.kmers:
            solutions.append(SourceSet(tuple(BitSequence(v, n) for v, _ in combo)))
    return solutions


# =============================================================================
# DIFFERENCE GRAPHS
# =============================================================================

@dataclass
class DifferenceGraph:
    """Graph of the paths in X - X_alt, with multiplicities counted inside that difference."""
    graph: DeBruijnGraph
    mu_diff: Dict[int, int]
    size: int
    symmetric: bool = True
    edge_mu: Dict[int, int] = field(default_factory=dict)


def _multiset_difference(x: SourceSet, x_alt: SourceSet) -> List[BitSequence]:
    remaining = Counter(s.bits for s in x_alt)
    diff = []
    for source in x:
        if remaining[source.bits]:
            remaining[source.bits] -= 1
        else:
            diff.append(source)
    return diff


def _difference_side(strings: List[BitSequence], k: int) -> Tuple[Dict[int, int], Dict[int, int]]:
    edges = Counter()
    mu = Counter()
    for s in strings:
        edges.update(s.windows(k + 1))
        mu.update(s.windows(k))
    return dict(edges), dict(mu)


def difference_graph(x: SourceSet, x_alt: SourceSet, k: int) -> DifferenceGraph:
    """The difference de Bruijn graph of two k-mer-equivalent source sets."""
    if extract_kmer_set(x, k) != extract_kmer_set(x_alt, k):
        raise PreconditionViolation("source sets have different (k+1)-mer sets")
    if x == x_alt:
        raise PreconditionViolation("source sets are equal as multisets")

    forward = _multiset_difference(x, x_alt)
    backward = _multiset_difference(x_alt, x)
    edge_mu, mu = _difference_side(forward, k)
    back_edge_mu, back_mu = _difference_side(backward, k)

    symmetric = set(edge_mu) == set(back_edge_mu) and mu == back_mu
    if not symmetric:
        logger.warning(f"[Difference] X - X' and X' - X disagree ({len(edge_mu)} vs {len(back_edge_mu)} edges)")

    graph = DeBruijnGraph(k, edge_mu)
    return DifferenceGraph(graph=graph, mu_diff=mu, size=len(forward), symmetric=symmetric, edge_mu=edge_mu)


def count_maximal_shared_subpaths(d: DifferenceGraph) -> int:
    """
    Maximal chains of multiplicity-2 nodes joined by edges that both
    traversals take. A shared node whose traversals split or merge ends its
    chain there, so chains never branch; a lone shared node counts as one.
    """
    g = d.graph
    shared = {v for v, count in d.mu_diff.items() if count == 2}
    if not shared:
        return 0

    nxt: Dict[int, int] = {}
    prv: Dict[int, int] = {}
    for edge, count in d.edge_mu.items():
        head, tail = g.prefix(edge), g.suffix(edge)
        if count != 2 or head not in shared or tail not in shared:
            continue
        # two traversals leave room for one doubly used edge on each side
        if head in nxt or tail in prv:
            raise ReconstructionInvariantError(f"shared chain branches at {g.label(head)}")
        nxt[head] = tail
        prv[tail] = head

    heads = [v for v in shared if v not in prv]
    covered = set()
    for v in heads:
        while v is not None and v not in covered:
            covered.add(v)
            v = nxt.get(v)

    # Chains that close on themselves have no head
    cycles = 0
    for v in sorted(shared - covered):
        if v in covered:
            continue
        cycles += 1
        while v not in covered:
            covered.add(v)
            v = nxt[v]
    return len(heads) + cycles


def minimal_difference(x: SourceSet, solutions: List[SourceSet]) -> Optional[Tuple[int, SourceSet]]:
    """The alternative solution with the fewest strings outside x, as (c, X_alt)."""
    best = None
    for candidate in solutions:
        if candidate == x:
            continue
        c = len(_multiset_difference(x, candidate))
        if best is None or c < best[0]:
            best = (c, candidate)
    return best


def check_shared_subpath_bound(x: SourceSet, result: ReconstructionResult, k: int) -> Optional[bool]:
    """
    For an instance free of events A to D with an exhausted search, the
    minimal alternative with c differing strings must leave at least c
    maximal shared subpaths. None when the check does not apply.
    """
    if not result.exhausted:
        return None
    if any(detect(x, k) is not None for detect in (detect_A, detect_B, detect_C, detect_D)):
        return None
    best = minimal_difference(x, result.solutions)
    if best is None:
        return None
    c, alternative = best
    return count_maximal_shared_subpaths(difference_graph(x, alternative, k)) >= c
