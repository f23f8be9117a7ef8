#!/usr/bin/env python3
"""
Unit tests for reconstruct - walk search, uniqueness, oracle, difference graphs.

Run with: pytest tests/unit/test_reconstruct.py -v
"""

import pytest
import sys
import os
from collections import Counter

import numpy as np
from hypothesis import given, settings, strategies as st

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from ambiguity import construct_swap_D
from core_model import KmerSet, Params, SourceSet, derive_seed, extract_kmer_set, generate_sources
from debruijn import DeBruijnGraph, StructureViolation, build_graph, label_multiplicities
from events import count_same_position, detect_D
import reconstruct
from reconstruct import (
    Budget,
    BudgetExceeded,
    DifferenceGraph,
    OracleTooLarge,
    PreconditionViolation,
    ReconstructionInvariantError,
    StopReason,
    Uniqueness,
    brute_force_oracle,
    check_shared_subpath_bound,
    count_maximal_shared_subpaths,
    difference_graph,
    enumerate_reconstructions,
    is_unique,
    label_gap,
    minimal_difference,
)
from topology_fixtures import (
    FOUR_PATH_CYCLE_K,
    TWO_PATH_EXCHANGE_K,
    four_path_cycle,
    four_path_cycle_alt,
    two_path_exchange,
    two_path_exchange_alt,
)

ROOMY = Budget(max_solutions=10, max_expansions=1_000_000)


def solve(x, k, budget=ROOMY):
    return enumerate_reconstructions(extract_kmer_set(x, k), x.m, x.n, budget)


@st.composite
def small_source_sets(draw):
    m = draw(st.integers(min_value=1, max_value=3))
    n = draw(st.integers(min_value=5, max_value=10))
    k = draw(st.integers(min_value=2, max_value=n - 2))
    strings = draw(st.lists(st.text(alphabet="01", min_size=n, max_size=n), min_size=m, max_size=m))
    return SourceSet.from_strings(strings), k


def planted_exchange(seed, n=24, k=8):
    """Two random sources sharing two k-mers at the same gap, at different offsets."""
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(2, n))
    u, v = rng.integers(0, 2, size=(2, k))
    gap = k + 2
    for row, start in ((0, 2), (1, 4)):
        bits[row, start:start + k] = u
        bits[row, start + gap:start + gap + k] = v
    return SourceSet.from_strings("".join(str(b) for b in row) for row in bits)


class TestEnumeration:
    """Exhaustive search over walk decompositions."""

    def test_unique_single_source(self):
        x = SourceSet.from_strings(["0001011"])
        result = solve(x, 3)
        assert result.exhausted
        assert result.solutions == [x]
        assert result.stop_reason is StopReason.COMPLETE

    def test_two_path_exchange_has_two_solutions(self):
        result = solve(two_path_exchange(), TWO_PATH_EXCHANGE_K)
        assert result.exhausted
        assert set(result.solutions) == {two_path_exchange(), two_path_exchange_alt()}
        assert result.label_agreement is True

    def test_four_path_cycle_has_two_solutions(self):
        result = solve(four_path_cycle(), FOUR_PATH_CYCLE_K)
        assert result.exhausted
        assert set(result.solutions) == {four_path_cycle(), four_path_cycle_alt()}

    def test_solutions_are_distinct_and_sorted(self):
        x = SourceSet.from_strings(["0110110", "1001010"])
        result = solve(x, 2, Budget.unbounded())
        keys = [tuple(sorted(s.to_strings())) for s in result.solutions]
        assert keys == sorted(set(keys))

    def test_solution_cap(self):
        result = solve(two_path_exchange(), TWO_PATH_EXCHANGE_K, Budget(max_solutions=1, max_expansions=None))
        assert len(result.solutions) == 1
        assert result.stop_reason is StopReason.SOLUTION_CAP
        assert not result.exhausted

    def test_expansion_cap(self):
        result = solve(two_path_exchange(), TWO_PATH_EXCHANGE_K, Budget(max_solutions=None, max_expansions=1))
        assert result.stop_reason is StopReason.EXPANSION_CAP
        assert not result.exhausted
        with pytest.raises(BudgetExceeded):
            result.raise_for_budget()

    def test_no_solution_for_impossible_length(self):
        y = extract_kmer_set(SourceSet.from_strings(["0001011"]), 3)
        result = enumerate_reconstructions(y, 1, 5, Budget.unbounded())
        assert result.exhausted
        assert result.solutions == []

    @pytest.mark.parametrize("m,n", [(0, 8), (1, 3)])
    def test_preconditions(self, m, n):
        y = extract_kmer_set(SourceSet.from_strings(["0001011"]), 3)
        with pytest.raises(PreconditionViolation):
            enumerate_reconstructions(y, m, n)


class TestOracle:
    """Search against brute force on small instances."""

    @pytest.mark.parametrize("n,m,k", [
        (5, 1, 2),
        (6, 2, 2),
        (7, 2, 3),
        (8, 2, 2),
        (6, 3, 2),
        (5, 3, 3),
    ])
    @pytest.mark.parametrize("t", range(10))
    def test_matches_brute_force(self, n, m, k, t):
        x = generate_sources(Params(n=n, m=m, k=k), derive_seed(2024, n, m, k, t))
        y = extract_kmer_set(x, k)
        searched = enumerate_reconstructions(y, m, n, Budget.unbounded())
        expected = brute_force_oracle(y, m, n)
        assert searched.exhausted
        assert set(searched.solutions) == set(expected)
        assert len(searched.solutions) == len(expected), "each multiset appears once"
        assert x in searched.solutions

    def test_oracle_size_limit(self):
        y = extract_kmer_set(SourceSet.from_strings(["0" * 13]), 2)
        with pytest.raises(OracleTooLarge):
            brute_force_oracle(y, 2, 13)

    def test_cyclic_set_has_every_rotation(self):
        y = KmerSet.from_strings(["0110", "1101", "1011"])
        expected = [["011011"], ["101101"], ["110110"]]
        assert [s.to_strings() for s in brute_force_oracle(y, 1, 6)] == expected
        searched = enumerate_reconstructions(y, 1, 6, Budget.unbounded())
        assert [s.to_strings() for s in searched.solutions] == expected


class TestLabeledSearch:
    """Unitig search under exact label counts."""

    @staticmethod
    def _refuse(g, m):
        raise StructureViolation("labels disabled for comparison")

    @pytest.fixture
    def edge_level_only(self, monkeypatch):
        monkeypatch.setattr(reconstruct, "label_multiplicities", self._refuse)

    def test_true_sources_fill_the_walks(self):
        x = two_path_exchange()
        g = build_graph(extract_kmer_set(x, TWO_PATH_EXCHANGE_K))
        labels = label_multiplicities(g, x.m)
        assert label_gap(g, labels, x.m, x.n - TWO_PATH_EXCHANGE_K) == 0

    def test_exchange_solved_in_labeled_mode(self):
        result = solve(two_path_exchange(), TWO_PATH_EXCHANGE_K)
        assert result.labeled_search
        assert set(result.solutions) == {two_path_exchange(), two_path_exchange_alt()}

    def test_overcommitted_labels_need_no_search(self):
        y = extract_kmer_set(SourceSet.from_strings(["0001011"]), 3)
        result = enumerate_reconstructions(y, 1, 5, Budget.unbounded())
        assert result.exhausted
        assert result.solutions == []
        assert result.expansions == 0

    def test_agrees_with_edge_level_search(self, monkeypatch):
        params = Params(n=40, m=3, k=10)
        compared = 0
        for t in range(10):
            x = generate_sources(params, derive_seed(31, t))
            labeled = solve(x, params.k)
            if not labeled.labeled_search:
                continue
            with monkeypatch.context() as patch:
                patch.setattr(reconstruct, "label_multiplicities", self._refuse)
                plain = solve(x, params.k)
            assert not plain.labeled_search
            assert labeled.exhausted and plain.exhausted
            assert set(labeled.solutions) == set(plain.solutions)
            assert labeled.expansions <= plain.expansions, \
                f"seed {t}: {labeled.expansions} unitig steps vs {plain.expansions} edges"
            compared += 1
        assert compared > 0, "no labeled instance among the seeds"

    def test_edge_level_fallback_still_complete(self, edge_level_only):
        result = solve(two_path_exchange(), TWO_PATH_EXCHANGE_K)
        assert not result.labeled_search
        assert result.labels is None
        assert set(result.solutions) == {two_path_exchange(), two_path_exchange_alt()}

    @pytest.mark.parametrize("t", range(5))
    def test_medium_instance_within_budget(self, t):
        params = Params(n=256, m=4, k=16)
        x = generate_sources(params, derive_seed(77, t))
        result = enumerate_reconstructions(extract_kmer_set(x, params.k), params.m, params.n,
                                           Budget(max_solutions=2, max_expansions=100_000))
        assert result.stop_reason is not StopReason.EXPANSION_CAP, f"{result.expansions} expansions"
        if result.exhausted:
            assert x in result.solutions


class TestUniqueness:
    """Three-way uniqueness verdicts."""

    def test_unique(self):
        assert is_unique(SourceSet.from_strings(["0001011"]), 3) is Uniqueness.UNIQUE

    def test_ambiguous_by_certificate(self):
        assert is_unique(two_path_exchange(), TWO_PATH_EXCHANGE_K) is Uniqueness.AMBIGUOUS

    def test_ambiguous_by_search(self):
        assert is_unique(four_path_cycle(), FOUR_PATH_CYCLE_K) is Uniqueness.AMBIGUOUS

    def test_unknown_on_tiny_budget(self):
        verdict = is_unique(four_path_cycle(), FOUR_PATH_CYCLE_K, Budget(max_expansions=1))
        assert verdict is Uniqueness.UNKNOWN

    @settings(max_examples=80, deadline=None)
    @given(small_source_sets())
    def test_uniqueness_survives_longer_kmers(self, case):
        x, k = case
        if is_unique(x, k) is Uniqueness.UNIQUE:
            assert is_unique(x, k + 1) is not Uniqueness.AMBIGUOUS, f"k={k} {x.to_strings()}"


class TestDifferenceGraph:
    """Shared-subpath structure of two equivalent source sets."""

    @pytest.mark.parametrize("x,alt,k,expected", [
        (two_path_exchange(), two_path_exchange_alt(), TWO_PATH_EXCHANGE_K, 2),
        (four_path_cycle(), four_path_cycle_alt(), FOUR_PATH_CYCLE_K, 4),
    ])
    def test_fixture_subpaths(self, x, alt, k, expected):
        d = difference_graph(x, alt, k)
        assert d.symmetric
        assert d.size == x.m
        assert count_maximal_shared_subpaths(d) == expected

    def test_equal_sets_rejected(self):
        x = two_path_exchange()
        with pytest.raises(PreconditionViolation):
            difference_graph(x, x, TWO_PATH_EXCHANGE_K)

    def test_inequivalent_sets_rejected(self):
        with pytest.raises(PreconditionViolation):
            difference_graph(two_path_exchange(), four_path_cycle(), TWO_PATH_EXCHANGE_K)

    def test_d_swap_leaves_one_shared_subpath(self):
        params = Params(n=40, m=2, k=10)
        for t in range(3000):
            x = generate_sources(params, derive_seed(7, t))
            if count_same_position(x, params.k) != 1:
                continue
            counts = Counter(v for source in x for v in source.windows(params.k))
            repeated = [v for v, c in counts.items() if c > 1]
            if len(repeated) != 1 or counts[repeated[0]] != 2:
                continue
            w = detect_D(x, params.k)
            if not 1 < w.a < params.n_prime:
                continue
            alt = construct_swap_D(x, w, params.k)
            d = difference_graph(x, alt, params.k)
            assert count_maximal_shared_subpaths(d) == 1
            return
        pytest.skip("no instance with a single same-position repeat in the scanned seeds")

    def test_minimal_difference_and_bound(self):
        x = two_path_exchange()
        result = solve(x, TWO_PATH_EXCHANGE_K)
        c, alt = minimal_difference(x, result.solutions)
        assert c == 2
        assert alt == two_path_exchange_alt()
        assert check_shared_subpath_bound(x, result, TWO_PATH_EXCHANGE_K) is True

    def test_bound_not_applicable_with_repeats(self):
        x = SourceSet.from_strings(["01101", "10100"])
        result = solve(x, 2)
        assert check_shared_subpath_bound(x, result, 2) is None

    def test_split_shared_node_ends_its_chain(self):
        # 010 and 110 each send one traversal to 100 and one to 101
        edges = {0b0101: 1, 0b0100: 1, 0b1100: 1, 0b1101: 1}
        d = DifferenceGraph(
            graph=DeBruijnGraph(3, edges),
            mu_diff={0b010: 2, 0b110: 2, 0b100: 2, 0b101: 2},
            size=4,
            edge_mu=edges,
        )
        assert count_maximal_shared_subpaths(d) == 4

    def test_doubly_used_edges_form_one_chain(self):
        edges = {0b0001: 2, 0b0011: 2}
        d = DifferenceGraph(
            graph=DeBruijnGraph(3, edges),
            mu_diff={0b000: 2, 0b001: 2, 0b011: 2},
            size=2,
            edge_mu=edges,
        )
        assert count_maximal_shared_subpaths(d) == 1

    def test_branching_chain_is_an_invariant_error(self):
        edges = {0b0100: 2, 0b0101: 2}
        d = DifferenceGraph(
            graph=DeBruijnGraph(3, edges),
            mu_diff={0b010: 2, 0b100: 2, 0b101: 2},
            size=2,
            edge_mu=edges,
        )
        with pytest.raises(ReconstructionInvariantError):
            count_maximal_shared_subpaths(d)

    def test_bound_holds_on_planted_exchanges(self):
        budget = Budget(max_solutions=16, max_expansions=200_000)
        applied = 0
        for t in range(300):
            x = planted_exchange(derive_seed(41, t))
            verdict = check_shared_subpath_bound(x, solve(x, 8, budget), 8)
            if verdict is None:
                continue
            assert verdict is True, x.to_strings()
            applied += 1
            if applied == 10:
                break
        assert applied > 0
