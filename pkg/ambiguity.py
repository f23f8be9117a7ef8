"""
Ambiguity Certificates

Builds alternative source sets with the same (k+1)-mer set from repeat
witnesses:

- D swap (shared k-mer at the same position a in x_i and x_j): exchange
  the tails from position a on.
- H swap (x_i and x_j share two k-mers with the same gap, starting at a in
  x_i and c in x_j): exchange the middle parts between the shared k-mers.

A swap whose output is the input multiset again (a = 1 D swap, identical
sources) proves nothing; is_certificate() reports only swaps that give a
different multiset with an identical (k+1)-mer set.
"""

import logging
from typing import Optional, Tuple

from core_model import SourceSet, extract_kmer_set
from events import EventKind, EventWitness, iter_witnesses

logger = logging.getLogger("ambiguity")


class InvalidWitness(ValueError):
    """Raised when a witness has the wrong kind or does not hold for the sources."""
    pass


def _require(x: SourceSet, w: EventWitness, kind: EventKind, k: Optional[int]) -> None:
    if w.kind is not kind:
        raise InvalidWitness(f"expected a {kind.value} witness, got {w.kind.value}")
    if k is not None and not w.validate(x, k):
        raise InvalidWitness(f"witness {w.to_json()} does not hold for these sources")


def construct_swap_D(x: SourceSet, w: EventWitness, k: Optional[int] = None) -> SourceSet:
    """x_i[1:a-1] x_j[a:n] and x_j[1:a-1] x_i[a:n] replace x_i and x_j."""
    _require(x, w, EventKind.D, k)
    n = x.n
    if not (1 <= w.a <= n and w.i != w.j):
        raise InvalidWitness(f"witness {w.to_json()} is out of range")
    xi, xj = x[w.i], x[w.j]

    new_i = _join(xi.substring(1, w.a - 1), xj.substring(w.a, n))
    new_j = _join(xj.substring(1, w.a - 1), xi.substring(w.a, n))
    return x.replace({w.i: new_i, w.j: new_j})


def construct_swap_H(x: SourceSet, w: EventWitness, k: Optional[int] = None) -> SourceSet:
    """
    x_i[1:a-1] x_j[c:c+b-a-1] x_i[b:n] and x_j[1:c-1] x_i[a:b-1] x_j[c+b-a:n]
    replace x_i and x_j.
    """
    _require(x, w, EventKind.H, k)
    if w.b is None or w.a is None or w.b <= w.a:
        raise InvalidWitness("H swap needs a < b (non-empty middle)")
    n = x.n
    a, b, c = w.a, w.b, w.c
    gap = b - a
    if w.i == w.j or c < 1 or c + gap > n:
        raise InvalidWitness(f"witness {w.to_json()} is out of range")
    xi, xj = x[w.i], x[w.j]

    new_i = _join(xi.substring(1, a - 1), xj.substring(c, c + gap - 1), xi.substring(b, n))
    new_j = _join(xj.substring(1, c - 1), xi.substring(a, b - 1), xj.substring(c + gap, n))
    return x.replace({w.i: new_i, w.j: new_j})


def _join(*parts):
    present = [p for p in parts if p is not None]
    return present[0].concat(*present[1:])


def verify_equivalent(x: SourceSet, x_alt: SourceSet, k: int) -> bool:
    """True iff both source sets have the same (k+1)-mer set."""
    if x.n != x_alt.n or x.m != x_alt.m:
        raise ValueError(f"shape mismatch: ({x.m}, {x.n}) vs ({x_alt.m}, {x_alt.n})")
    return extract_kmer_set(x, k) == extract_kmer_set(x_alt, k)


def is_certificate(x: SourceSet, x_alt: SourceSet, k: int) -> bool:
    """x_alt proves ambiguity: same (k+1)-mers, different multiset."""
    return x_alt != x and verify_equivalent(x, x_alt, k)


SWAPS = {
    EventKind.D: construct_swap_D,
    EventKind.H: construct_swap_H,
}


def find_swap_certificate(x: SourceSet, k: int) -> Optional[Tuple[EventWitness, SourceSet]]:
    """
    First D witness, then first H witness, whose swap is a certificate.
    Witnesses are tried smallest first.
    """
    if x.m < 2:
        return None
    for kind in (EventKind.D, EventKind.H):
        for witness in iter_witnesses(x, k, kind):
            alternative = SWAPS[kind](x, witness)
            if is_certificate(x, alternative, k):
                logger.debug(f"[Swap] certificate from {witness.to_json()}")
                return witness, alternative
    return None
