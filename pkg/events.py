"""
Repeat Event Detection

Finds the repeat structures that decide whether a source set can be
recovered from its (k+1)-mers. Positions are 1-based k-mer window indices;
x_i(a) is the a-th k-mer of source i and n' = n - k + 1.

    A  intra-sequence repeat        x_i(a) = x_i(b), a < b
    B  overlapped double repeat     x_i(a) = x_j(c), x_i(b) = x_l(d),
                                    0 <= b - a < k, not a plain long repeat
    C  boundary repeat              x_i(1) or x_i(n') occurs anywhere else
    D  same-position repeat         x_i(a) = x_j(a), i < j
    H  equal-gap double repeat      x_i(a) = x_j(c), x_i(b) = x_j(c + b - a)

Every detector walks its witnesses in lexicographic order, so detect_* returns
the smallest witness and count_witnesses counts them all. For D and H the
counts equal the V and U statistics.
"""

import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from core_model import SourceSet, kmer_at

logger = logging.getLogger("events")


class EventKind(Enum):
    """Repeat structures tracked by the detectors."""
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    H = "H"


# Fields carried by each kind, in output order
WITNESS_FIELDS = {
    EventKind.A: ("i", "a", "b"),
    EventKind.B: ("i", "j", "l", "a", "b", "c", "d"),
    EventKind.C: ("i", "a", "j", "b"),
    EventKind.D: ("i", "j", "a"),
    EventKind.H: ("i", "j", "a", "b", "c"),
}


@dataclass(frozen=True)
class EventWitness:
    """
    Locates one repeat structure. Indices are 1-based; unused fields stay None.

    For C, `a` is the boundary window (1 or n') of source i and (j, b) is the
    other occurrence.
    """
    kind: EventKind
    i: int
    j: Optional[int] = None
    l: Optional[int] = None
    a: Optional[int] = None
    b: Optional[int] = None
    c: Optional[int] = None
    d: Optional[int] = None

    def to_dict(self) -> Dict:
        data = {"kind": self.kind.value}
        for name in WITNESS_FIELDS[self.kind]:
            data[name] = getattr(self, name)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def validate(self, x: SourceSet, k: int) -> bool:
        """Re-check the claimed k-mer equalities against x."""
        try:
            return _validate(self, x, k)
        except (TypeError, ValueError, IndexError):
            return False


def _validate(w: EventWitness, x: SourceSet, k: int) -> bool:
    last = x.n - k + 1

    def at(i, a):
        return kmer_at(x[i], a, k)

    if w.kind is EventKind.A:
        return w.a < w.b and at(w.i, w.a) == at(w.i, w.b)
    if w.kind is EventKind.B:
        if not 0 <= w.b - w.a < k:
            return False
        if (w.j, w.c) == (w.i, w.a) or (w.l, w.d) == (w.i, w.b) or (w.j, w.c) == (w.l, w.d):
            return False
        if w.j == w.l and w.d - w.c == w.b - w.a:
            return False
        return at(w.i, w.a) == at(w.j, w.c) and at(w.i, w.b) == at(w.l, w.d)
    if w.kind is EventKind.C:
        if w.a not in (1, last) or (w.j, w.b) == (w.i, w.a):
            return False
        return at(w.i, w.a) == at(w.j, w.b)
    if w.kind is EventKind.D:
        return w.i < w.j and at(w.i, w.a) == at(w.j, w.a)
    if w.kind is EventKind.H:
        if w.i == w.j or not w.a < w.b:
            return False
        end = w.c + w.b - w.a
        if end > last:
            return False
        return at(w.i, w.a) == at(w.j, w.c) and at(w.i, w.b) == at(w.j, end)
    return False


# =============================================================================
# INDEXING
# =============================================================================

def _occurrence_index(x: SourceSet, k: int) -> Dict[int, List[Tuple[int, int]]]:
    """k-mer value -> sorted (i, a) occurrences."""
    index = defaultdict(list)
    for i, source in enumerate(x, start=1):
        for a, value in enumerate(source.windows(k), start=1):
            index[value].append((i, a))
    return index


def _check_k(x: SourceSet, k: int) -> None:
    if k < 1 or k > x.n:
        raise ValueError(f"k={k} outside 1..{x.n}")


# =============================================================================
# WITNESS ITERATORS
# =============================================================================

def _iter_A(x: SourceSet, k: int) -> Iterator[EventWitness]:
    for i, source in enumerate(x, start=1):
        positions = defaultdict(list)
        for a, value in enumerate(source.windows(k), start=1):
            positions[value].append(a)
        pairs = []
        for occ in positions.values():
            for p in range(len(occ)):
                for q in range(p + 1, len(occ)):
                    pairs.append((occ[p], occ[q]))
        for a, b in sorted(pairs):
            yield EventWitness(EventKind.A, i=i, a=a, b=b)


def _iter_B(x: SourceSet, k: int) -> Iterator[EventWitness]:
    index = _occurrence_index(x, k)
    windows = [source.windows(k) for source in x]
    last = x.n - k + 1

    for i in range(1, x.m + 1):
        row = windows[i - 1]
        for a in range(1, last + 1):
            first = [occ for occ in index[row[a - 1]] if occ != (i, a)]
            if not first:
                continue
            for b in range(a, min(a + k - 1, last) + 1):
                second = [occ for occ in index[row[b - 1]] if occ != (i, b)]
                for j, c in first:
                    for l, d in second:
                        if (j, c) == (l, d):
                            continue
                        if j == l and d - c == b - a:
                            continue
                        yield EventWitness(EventKind.B, i=i, j=j, l=l, a=a, b=b, c=c, d=d)


def _iter_C(x: SourceSet, k: int) -> Iterator[EventWitness]:
    index = _occurrence_index(x, k)
    last = x.n - k + 1
    for i in range(1, x.m + 1):
        for a in sorted({1, last}):
            value = kmer_at(x[i], a, k)
            for j, b in index[value]:
                if (j, b) != (i, a):
                    yield EventWitness(EventKind.C, i=i, a=a, j=j, b=b)


def _iter_D(x: SourceSet, k: int) -> Iterator[EventWitness]:
    matrix = x.window_matrix(k)
    for i in range(x.m):
        for j in range(i + 1, x.m):
            for a in np.flatnonzero(matrix[i] == matrix[j]):
                yield EventWitness(EventKind.D, i=i + 1, j=j + 1, a=int(a) + 1)


def _pair_matches(matrix: np.ndarray, i: int, j: int) -> Tuple[np.ndarray, np.ndarray]:
    """Positions (a, c), 0-based, where row i's window a equals row j's window c."""
    equal = matrix[i][:, None] == matrix[j][None, :]
    return np.nonzero(equal)


def _iter_H(x: SourceSet, k: int) -> Iterator[EventWitness]:
    matrix = x.window_matrix(k)
    for i in range(x.m):
        for j in range(x.m):
            if i == j:
                continue
            a_idx, c_idx = _pair_matches(matrix, i, j)
            by_shift = defaultdict(list)
            for a, c in zip(a_idx.tolist(), c_idx.tolist()):
                by_shift[c - a].append(a)
            triples = []
            for shift, starts in by_shift.items():
                starts.sort()
                for p in range(len(starts)):
                    for q in range(p + 1, len(starts)):
                        triples.append((starts[p], starts[q], starts[p] + shift))
            for a, b, c in sorted(triples):
                yield EventWitness(EventKind.H, i=i + 1, j=j + 1, a=a + 1, b=b + 1, c=c + 1)


_ITERATORS = {
    EventKind.A: _iter_A,
    EventKind.B: _iter_B,
    EventKind.C: _iter_C,
    EventKind.D: _iter_D,
    EventKind.H: _iter_H,
}


def iter_witnesses(x: SourceSet, k: int, kind: EventKind) -> Iterator[EventWitness]:
    """All witnesses of one kind, smallest first."""
    _check_k(x, k)
    if kind in (EventKind.D, EventKind.H) and x.m < 2:
        return iter(())
    return _ITERATORS[kind](x, k)


def _first(x: SourceSet, k: int, kind: EventKind) -> Optional[EventWitness]:
    return next(iter_witnesses(x, k, kind), None)


def detect_A(x: SourceSet, k: int) -> Optional[EventWitness]:
    """Intra-sequence repeat x_i(a) = x_i(b), a < b."""
    return _first(x, k, EventKind.A)


def detect_B(x: SourceSet, k: int) -> Optional[EventWitness]:
    """
    Two repeats anchored in x_i at windows a <= b less than k apart that are
    not simply one longer repeat. Occurrences must be distinct, so b == a is
    a k-mer seen three times.
    """
    return _first(x, k, EventKind.B)


def detect_C(x: SourceSet, k: int) -> Optional[EventWitness]:
    """First or last k-mer of some source occurs somewhere else."""
    return _first(x, k, EventKind.C)


def detect_D(x: SourceSet, k: int) -> Optional[EventWitness]:
    """Two sources share a k-mer at the same position."""
    return _first(x, k, EventKind.D)


def detect_H(x: SourceSet, k: int) -> Optional[EventWitness]:
    """Two sources share two k-mers separated by the same gap in both."""
    return _first(x, k, EventKind.H)


DETECTORS = {
    EventKind.A: detect_A,
    EventKind.B: detect_B,
    EventKind.C: detect_C,
    EventKind.D: detect_D,
    EventKind.H: detect_H,
}


def detect_repeat(x: SourceSet, k: int) -> Optional[Tuple[Tuple[int, int], Tuple[int, int]]]:
    """Any k-mer occurring twice within or across sources, as ((i, a), (j, b))."""
    _check_k(x, k)
    index = _occurrence_index(x, k)
    repeats = [occ[:2] for occ in index.values() if len(occ) > 1]
    if not repeats:
        return None
    first, second = min(repeats)
    return first, second


# =============================================================================
# COUNTS
# =============================================================================

def _count_shift_pairs(matrix: np.ndarray, i: int, j: int) -> int:
    a_idx, c_idx = _pair_matches(matrix, i, j)
    if a_idx.size < 2:
        return 0
    _, counts = np.unique(c_idx - a_idx, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def count_same_position(x: SourceSet, k: int) -> int:
    """Number of (i < j, a) with x_i(a) = x_j(a)."""
    _check_k(x, k)
    if x.m < 2:
        return 0
    matrix = x.window_matrix(k)
    total = 0
    for i in range(x.m):
        total += int((matrix[i + 1:] == matrix[i]).sum())
    return total


def count_equal_gap_pairs(x: SourceSet, k: int) -> int:
    """Number of (i < j, a < b, c) with x_i(a) = x_j(c) and x_i(b) = x_j(c + b - a)."""
    _check_k(x, k)
    if x.m < 2:
        return 0
    matrix = x.window_matrix(k)
    return sum(_count_shift_pairs(matrix, i, j) for i in range(x.m) for j in range(i + 1, x.m))


def count_witnesses(x: SourceSet, k: int, kind: EventKind) -> int:
    """
    Count-all variant of the detectors. D counts ordered i < j and equals V;
    H counts unordered source pairs and equals U.
    """
    if kind is EventKind.D:
        return count_same_position(x, k)
    if kind is EventKind.H:
        return count_equal_gap_pairs(x, k)
    return sum(1 for _ in iter_witnesses(x, k, kind))
