"""
Core Model for K-mer Reconstruction Limits

Parameter handling, random source generation and (k+1)-mer set extraction.

Conventions used across every module in this repo:
- Sequences are binary, bit-packed into Python ints (most significant bit is
  the first symbol), so "0101" is stored as 0b0101 with length 4.
- Public positions are 1-based: kmer_at(x, 1, k) is the first k-mer.
- Logarithms are base 2, and n^(-beta) is always evaluated as 2^(-k).
- Source sets compare as multisets (equal up to relabeling).

CONFIGURATION:
- Seeds are 64-bit integers. Per-source streams are derived from
  (seed, source index) with numpy SeedSequence spawn keys, so generating the
  first source alone gives the same bits as generating it inside a larger set.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger("core_model")

SEED_MASK = (1 << 64) - 1
MIN_N = 4
MIN_K = 2
# Window values above this width do not fit a uint64 numpy column
MAX_VECTOR_K = 63


class ParameterError(ValueError):
    """Raised when (n, m, k, alpha, beta) violate the model's constraints."""
    pass


class PositionError(ParameterError):
    """Raised when a 1-based position falls outside a sequence."""
    pass


class SequenceFormatError(ValueError):
    """Raised when textual sequence or k-mer input cannot be parsed."""
    pass


def round_half_up(value: float) -> int:
    """Nearest-integer rounding with halves going up (2.5 -> 3)."""
    return int(math.floor(value + 0.5))


# =============================================================================
# PARAMETERS
# =============================================================================

@dataclass(frozen=True)
class Params:
    """Model parameters: m sources of length n, reconstructed from (k+1)-mers."""
    n: int
    m: int
    k: int
    alpha: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"n must be positive, got {self.n}")
        if self.m < 1:
            raise ParameterError(f"m must be at least 1, got {self.m}")
        if self.k < MIN_K:
            raise ParameterError(f"k must be at least {MIN_K}, got {self.k}")
        if self.k + 1 > self.n:
            raise ParameterError(f"k+1={self.k + 1} exceeds n={self.n}: no (k+1)-mer fits")

    @property
    def n_prime(self) -> int:
        """Number of k-mer windows per source, n - k + 1."""
        return self.n - self.k + 1

    @property
    def effective_alpha(self) -> float:
        """alpha as given, else log2(m) / log2(n)."""
        if self.alpha is not None:
            return self.alpha
        return math.log2(self.m) / math.log2(self.n) if self.n > 1 else 0.0

    @property
    def effective_beta(self) -> float:
        """beta as given, else k / log2(n)."""
        if self.beta is not None:
            return self.beta
        return self.k / math.log2(self.n) if self.n > 1 else float("inf")


def derive_params(n: int, alpha: float, beta: float) -> Params:
    """
    Derive (m, k) from n and the exponents.

    m = max(1, round(n^alpha)), k = clamp(round(beta * log2 n), 2, n - 1).
    """
    if n < MIN_N:
        raise ParameterError(f"n must be at least {MIN_N}, got {n}")
    if alpha < 0:
        raise ParameterError(f"alpha must be non-negative, got {alpha}")
    if beta <= 0:
        raise ParameterError(f"beta must be positive, got {beta}")

    m = max(1, round_half_up(n ** alpha))
    k = min(max(MIN_K, round_half_up(beta * math.log2(n))), n - 1)
    if k + 1 > n:
        raise ParameterError(f"derived k={k} leaves no (k+1)-mer in length {n}")
    return Params(n=n, m=m, k=k, alpha=alpha, beta=beta)


def derive_seed(master_seed: int, *keys: int) -> int:
    """Splittable 64-bit seed derived from a master seed and integer keys."""
    seq = np.random.SeedSequence(entropy=master_seed & SEED_MASK, spawn_key=tuple(keys))
    lo, hi = seq.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


# =============================================================================
# SEQUENCES
# =============================================================================

@dataclass(frozen=True)
class BitSequence:
    """A binary string of fixed length, packed into an int (first symbol = MSB)."""
    bits: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ParameterError("sequence length must be positive")
        if self.bits < 0 or self.bits >> self.length:
            raise ParameterError(f"bits do not fit in length {self.length}")

    @classmethod
    def from_string(cls, text: str) -> "BitSequence":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise SequenceFormatError(f"not a binary string: {text!r}")
        return cls(int(text, 2), len(text))

    @classmethod
    def from_array(cls, symbols: Sequence[int]) -> "BitSequence":
        value = 0
        for symbol in symbols:
            value = (value << 1) | (int(symbol) & 1)
        return cls(value, len(symbols))

    def to_string(self) -> str:
        return format(self.bits, f"0{self.length}b")

    def __str__(self) -> str:
        return self.to_string()

    def __len__(self) -> int:
        return self.length

    def symbol(self, a: int) -> int:
        """Symbol at 1-based position a."""
        if not 1 <= a <= self.length:
            raise PositionError(f"position {a} outside 1..{self.length}")
        return (self.bits >> (self.length - a)) & 1

    def substring(self, a: int, b: int) -> Optional["BitSequence"]:
        """x[a:b], inclusive and 1-based. Returns None for an empty range (b < a)."""
        if b < a:
            return None
        if a < 1 or b > self.length:
            raise PositionError(f"range {a}..{b} outside 1..{self.length}")
        width = b - a + 1
        return BitSequence((self.bits >> (self.length - b)) & ((1 << width) - 1), width)

    def concat(self, *others: Optional["BitSequence"]) -> "BitSequence":
        value, length = self.bits, self.length
        for other in others:
            if other is None:
                continue
            value = (value << other.length) | other.bits
            length += other.length
        return BitSequence(value, length)

    def windows(self, width: int) -> Tuple[int, ...]:
        """All length-`width` windows left to right, as packed ints."""
        if not 1 <= width <= self.length:
            raise ParameterError(f"window width {width} outside 1..{self.length}")
        mask = (1 << width) - 1
        return tuple(
            (self.bits >> (self.length - start - width)) & mask
            for start in range(self.length - width + 1)
        )

    def array(self) -> np.ndarray:
        return np.array([int(c) for c in self.to_string()], dtype=np.uint8)


def kmer_at(x: BitSequence, a: int, k: int) -> int:
    """Packed value of x[a : a+k-1], the a-th k-mer (1-based)."""
    last = x.length - k + 1
    if k < 1 or not 1 <= a <= last:
        raise PositionError(f"k-mer position {a} outside 1..{last} (n={x.length}, k={k})")
    return (x.bits >> (x.length - a - k + 1)) & ((1 << k) - 1)


def format_kmer(value: int, width: int) -> str:
    return format(value, f"0{width}b")


@dataclass(frozen=True, eq=False)
class SourceSet:
    """
    The m source sequences. Order is kept for indexing (i is 1-based) but
    equality and hashing are multiset based.
    """
    sources: Tuple[BitSequence, ...]

    def __post_init__(self):
        if not self.sources:
            raise ParameterError("a source set needs at least one sequence")
        lengths = {s.length for s in self.sources}
        if len(lengths) != 1:
            raise ParameterError(f"sources have mixed lengths {sorted(lengths)}")

    @classmethod
    def from_strings(cls, strings: Iterable[str]) -> "SourceSet":
        return cls(tuple(BitSequence.from_string(s) for s in strings))

    @property
    def m(self) -> int:
        return len(self.sources)

    @property
    def n(self) -> int:
        return self.sources[0].length

    def __len__(self) -> int:
        return len(self.sources)

    def __iter__(self):
        return iter(self.sources)

    def __getitem__(self, i: int) -> BitSequence:
        """1-based source access, x[i] is x_i."""
        if not 1 <= i <= self.m:
            raise PositionError(f"source index {i} outside 1..{self.m}")
        return self.sources[i - 1]

    def canonical(self) -> Tuple[int, ...]:
        return tuple(sorted(s.bits for s in self.sources))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SourceSet):
            return NotImplemented
        return self.n == other.n and self.canonical() == other.canonical()

    def __hash__(self) -> int:
        return hash((self.n, self.canonical()))

    def replace(self, replacements: dict) -> "SourceSet":
        """Copy with 1-based indices swapped for new sequences."""
        sources = list(self.sources)
        for i, seq in replacements.items():
            sources[i - 1] = seq
        return SourceSet(tuple(sources))

    def to_strings(self) -> List[str]:
        return [s.to_string() for s in self.sources]

    def to_text(self) -> str:
        return "\n".join(self.to_strings()) + "\n"

    def window_matrix(self, k: int) -> np.ndarray:
        """(m, n-k+1) matrix of k-mer values; object dtype beyond 63-bit windows."""
        if not 1 <= k <= self.n:
            raise ParameterError(f"window width {k} outside 1..{self.n}")
        if k <= MAX_VECTOR_K:
            bits = np.array([s.array() for s in self.sources], dtype=np.uint64)
            windows = np.lib.stride_tricks.sliding_window_view(bits, k, axis=1)
            weights = np.left_shift(np.uint64(1), np.arange(k - 1, -1, -1, dtype=np.uint64))
            return (windows * weights).sum(axis=2, dtype=np.uint64)
        return np.array([list(s.windows(k)) for s in self.sources], dtype=object)


def parse_sources(text: str) -> SourceSet:
    """One binary string per line; blank lines and '#' comments are skipped."""
    lines = [line.strip() for line in text.splitlines()]
    lines = [line for line in lines if line and not line.startswith("#")]
    if not lines:
        raise SequenceFormatError("no source sequences found")
    try:
        return SourceSet.from_strings(lines)
    except ParameterError as e:
        raise SequenceFormatError(str(e)) from e


def generate_sources(params: Params, seed: int) -> SourceSet:
    """m i.i.d. uniform binary sequences of length n, deterministic in seed."""
    sources = []
    for index in range(params.m):
        seq = np.random.SeedSequence(entropy=seed & SEED_MASK, spawn_key=(index,))
        rng = np.random.default_rng(seq)
        sources.append(BitSequence.from_array(rng.integers(0, 2, size=params.n, dtype=np.uint8)))
    return SourceSet(tuple(sources))


# =============================================================================
# K-MER SETS
# =============================================================================

@dataclass(frozen=True)
class KmerSet:
    """The set Y of (k+1)-mers; k is the node (k-mer) length."""
    kmers: frozenset = field(default_factory=frozenset)
    k: int = MIN_K

    def __post_init__(self):
        limit = 1 << (self.k + 1)
        for value in self.kmers:
            if not 0 <= value < limit:
                raise ParameterError(f"value {value} is not a {self.k + 1}-bit word")

    @property
    def width(self) -> int:
        return self.k + 1

    def __len__(self) -> int:
        return len(self.kmers)

    def __iter__(self):
        return iter(sorted(self.kmers))

    def __contains__(self, value) -> bool:
        return value in self.kmers

    def to_strings(self) -> List[str]:
        return [format_kmer(v, self.width) for v in sorted(self.kmers)]

    def to_text(self) -> str:
        return "".join(line + "\n" for line in self.to_strings())

    @classmethod
    def from_strings(cls, strings: Iterable[str]) -> "KmerSet":
        words = [s.strip() for s in strings if s.strip()]
        if not words:
            raise SequenceFormatError("empty k-mer set")
        widths = {len(w) for w in words}
        if len(widths) != 1:
            raise SequenceFormatError(f"k-mers have mixed lengths {sorted(widths)}")
        width = widths.pop()
        if width < 2:
            raise SequenceFormatError("k-mers must have at least two symbols")
        bad = [w for w in words if set(w) - {"0", "1"}]
        if bad:
            raise SequenceFormatError(f"not a binary word: {bad[0]!r}")
        return cls(frozenset(int(w, 2) for w in words), width - 1)

    @classmethod
    def from_text(cls, text: str) -> "KmerSet":
        return cls.from_strings(line for line in text.splitlines() if not line.startswith("#"))


def extract_kmer_set(x: SourceSet, k: int) -> KmerSet:
    """Y(X): every length-(k+1) window of every source, deduplicated."""
    if k < 1 or k + 1 > x.n:
        raise ParameterError(f"k={k} needs 1 <= k and k+1 <= n={x.n}")
    values = set()
    for source in x:
        values.update(source.windows(k + 1))
    return KmerSet(frozenset(values), k)
