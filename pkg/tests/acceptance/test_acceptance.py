#!/usr/bin/env python3
"""
Acceptance tests - long Monte Carlo and enumeration runs.

Every test is marked slow and deselected by default. Run with:
    pytest -m slow tests/acceptance -v

KMERLIMITS_THREADS sets the worker count for the grid runs.
"""

import json
import math
import pytest
import sys
import os

# Add project root to path
ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
sys.path.insert(0, ROOT)

from ambiguity import construct_swap_D, construct_swap_H, is_certificate, verify_equivalent
from core_model import Params, derive_seed, extract_kmer_set, generate_sources
from debruijn import build_graph, label_multiplicities, true_multiplicities
from events import EventKind, detect_A, detect_B, detect_C, iter_witnesses
from experiment import (
    Measure,
    config_from_dict,
    emit_csv,
    estimate_joint_overlap,
    estimate_overlap,
    estimate_overlapped_pair,
    estimate_statistic_mean,
    run_cell,
    run_grid,
)
from reconstruct import (
    Budget,
    Uniqueness,
    brute_force_oracle,
    count_maximal_shared_subpaths,
    difference_graph,
    enumerate_reconstructions,
    is_unique,
)
from theory import (
    Verdict,
    classify_region,
    event_bounds,
    joint_overlap_probability,
    moments_U,
    moments_V,
    overlapped_pair_bound,
    repeat_free_bound,
)
from topology_fixtures import (
    FOUR_PATH_CYCLE_K,
    TWO_PATH_EXCHANGE_K,
    four_path_cycle,
    four_path_cycle_alt,
    two_path_exchange,
    two_path_exchange_alt,
)

with open(os.path.join(ROOT, "tests", "config.json"), encoding="utf-8") as _f:
    ACCEPTANCE = json.load(_f)["acceptance"]

SIGMA = ACCEPTANCE["sigma"]
THREADS = int(os.environ.get("KMERLIMITS_THREADS", str(os.cpu_count() or 1)))
EXPERIMENTS = os.path.join(ROOT, "experiments")

pytestmark = pytest.mark.slow


def load_experiment(name, **overrides):
    with open(os.path.join(EXPERIMENTS, name)) as f:
        data = json.load(f)
    data.update(overrides)
    return config_from_dict(data)


# ========== ENUMERATION ==========

class TestOracleEquivalence:
    """
    Search and brute force return the same solution sets.

    m * n is capped at oracle_max_bits: at n=8, m=3, k=2 a single (k+1)-mer
    set can have over a million reconstructions, which dominates the run.
    """

    def test_random_small_instances(self):
        disagreements = []
        cap = ACCEPTANCE["oracle_max_bits"]
        for t in range(ACCEPTANCE["oracle_instances"]):
            seed = derive_seed(1, t)
            m, k = 1 + (seed >> 8) % 3, 2 + (seed >> 16) % 2
            n = min(5 + seed % 4, cap // m)
            x = generate_sources(Params(n=n, m=m, k=k), seed)
            y = extract_kmer_set(x, k)
            searched = enumerate_reconstructions(y, m, n, Budget.unbounded())
            if set(searched.solutions) != set(brute_force_oracle(y, m, n)) or not searched.exhausted:
                disagreements.append((n, m, k, x.to_strings()))
        assert disagreements == [], f"{len(disagreements)} disagreement(s), first {disagreements[:1]}"


class TestSwapCertificates:
    """D and H swaps keep the (k+1)-mer set; distinct swaps prove ambiguity."""

    def _collect(self, kind, wanted):
        found = 0
        t = 0
        while found < wanted:
            seed = derive_seed(2, kind.value.encode()[0], t)
            t += 1
            n, m, k = 12 + seed % 9, 2 + (seed >> 8) % 2, 3 + (seed >> 16) % 2
            x = generate_sources(Params(n=n, m=m, k=k), seed)
            witness = next(iter_witnesses(x, k, kind), None)
            if witness is None:
                continue
            found += 1
            yield x, k, witness

    @pytest.mark.parametrize("kind,wanted,swap", [
        (EventKind.D, ACCEPTANCE["swap_instances_D"], construct_swap_D),
        (EventKind.H, ACCEPTANCE["swap_instances_H"], construct_swap_H),
    ])
    def test_swaps(self, kind, wanted, swap):
        for x, k, witness in self._collect(kind, wanted):
            alt = swap(x, witness, k)
            assert all(len(s) == x.n for s in alt)
            assert verify_equivalent(x, alt, k), f"{witness.to_json()} on {x.to_strings()}"
            if is_certificate(x, alt, k):
                assert is_unique(x, k) is Uniqueness.AMBIGUOUS


class TestLabeling:
    """Labels equal true multiplicities whenever A, B and C are absent."""

    def test_labels_match_truth(self):
        params = Params(n=64, m=4, k=16)
        checked = 0
        t = 0
        while checked < ACCEPTANCE["labeling_instances"]:
            x = generate_sources(params, derive_seed(3, t))
            t += 1
            if any(detect(x, params.k) is not None for detect in (detect_A, detect_B, detect_C)):
                continue
            g = build_graph(extract_kmer_set(x, params.k))
            assert label_multiplicities(g, params.m) == true_multiplicities(x, g, params.k), x.to_strings()
            checked += 1


# ========== MOMENTS AND PROBABILITIES ==========

class TestMoments:
    """Monte Carlo against the V and U moment formulas."""

    def test_expected_V(self):
        params = Params(n=64, m=4, k=8)
        mean, se, _ = estimate_statistic_mean(params, "V", 100_000, 4)
        expected = moments_V(params).e_first
        assert expected == pytest.approx(1.3359375)
        assert abs(mean - expected) <= SIGMA * se, f"mean {mean} vs {expected} (se {se})"

    def test_expected_U_lower_bound(self):
        params = Params(n=64, m=4, k=8)
        mean, se, _ = estimate_statistic_mean(params, "U", 5_000, 6)
        lower = moments_U(params).e_first
        assert mean >= lower - SIGMA * se, f"mean {mean} vs lower bound {lower} (se {se})"

    @pytest.mark.parametrize("n,m,k", [(64, 8, 10), (128, 8, 12), (256, 16, 14)])
    def test_paley_zygmund_holds(self, n, m, k):
        assert k < 2 * math.log2(m) + math.log2(n)
        params = Params(n=n, m=m, k=k)
        trials = 10_000
        _, _, positive = estimate_statistic_mean(params, "V", trials, derive_seed(5, n))
        se = math.sqrt(positive * (1 - positive) / trials)
        assert positive >= moments_V(params).pz_lower - SIGMA * se


class TestOverlapProbabilities:
    """Overlapping windows keep the 2^-k marginal."""

    @pytest.mark.parametrize("gap", range(1, 6))
    def test_single_source_overlap(self, gap):
        p, se = estimate_overlap(6, gap, 1_000_000, derive_seed(6, gap))
        assert abs(p - 2.0 ** -6) <= SIGMA * se

    @pytest.mark.parametrize("gap", range(1, 6))
    def test_joint_overlap(self, gap):
        p, se = estimate_joint_overlap(6, gap, 1_000_000, derive_seed(7, gap))
        assert abs(p - joint_overlap_probability(6, gap)) <= SIGMA * se

    @pytest.mark.parametrize("gap_i,gap_j", [(1, 2), (2, -1), (3, 0), (4, 5)])
    def test_overlapped_pair_bound(self, gap_i, gap_j):
        p, se = estimate_overlapped_pair(6, gap_i, gap_j, 1_000_000, derive_seed(8, gap_i, gap_j + 8))
        assert p <= overlapped_pair_bound(6) + SIGMA * se


# ========== BOUNDS ==========

class TestBounds:
    """Empirical event rates stay below the closed-form bounds."""

    def test_repeat_free_region(self):
        params = Params(n=128, m=4, k=24)
        bound = repeat_free_bound(params)
        assert bound == pytest.approx(0.01953125)
        report = run_cell(params, 2000, 9, [Measure.REPEAT_FREE], threads=THREADS)
        result = report.results[Measure.REPEAT_FREE]
        assert result.estimate <= bound + SIGMA * result.stderr

    @pytest.mark.parametrize("n,m,k", [
        (32, 2, 6), (32, 4, 8), (64, 2, 8), (64, 4, 10), (64, 8, 12),
        (128, 2, 10), (128, 4, 12), (128, 8, 14), (256, 4, 16), (256, 8, 18),
    ])
    def test_union_bounds_one_sided(self, n, m, k):
        params = Params(n=n, m=m, k=k)
        measures = [Measure.EVENT_A, Measure.EVENT_B, Measure.EVENT_C, Measure.EVENT_D]
        report = run_cell(params, 300, derive_seed(10, n, m, k), measures, threads=THREADS)
        bounds = event_bounds(params)
        for measure, key in zip(measures, ("A", "B", "C", "D")):
            result = report.results[measure]
            assert result.estimate <= bounds[key] + SIGMA * result.stderr, \
                f"{key}: {result.estimate} exceeds bound {bounds[key]}"


# ========== PHASE DIAGRAM ==========

class TestPhaseDiagram:
    """Non-uniqueness falls with k at n=512, m=8."""

    def test_trend_in_k(self):
        reports = run_grid(load_experiment("phase_sweep_n512.json", measures=["uniqueness"], threads=THREADS))
        reports = sorted((r for r in reports if not r.skipped), key=lambda r: r.k)
        rows = [(r.k, r.results[Measure.UNIQUENESS]) for r in reports]
        for r in reports:
            assert r.unknown_count / r.trials < 0.05, f"k={r.k}: {r.unknown_count} unknown"
        for (k0, a), (k1, b) in zip(rows, rows[1:]):
            slack = SIGMA * math.hypot(a.stderr, b.stderr)
            assert b.estimate <= a.estimate + slack, f"p_nonunique rises from k={k0} to k={k1}"
        by_k = dict(rows)
        assert by_k[8].estimate > 0.5
        assert by_k[24].estimate < 0.05

    @pytest.mark.parametrize("alpha,beta,verdict", [
        (1.0, 3.5, Verdict.FEASIBLE),
        (1.0, 2.5, Verdict.INFEASIBLE),
        (0.5, 2.2, Verdict.UNKNOWN),
    ])
    def test_classifier_spot_checks(self, alpha, beta, verdict):
        assert classify_region(alpha, beta).verdict is verdict

    def test_region_csv_independent_of_threads(self):
        serial = emit_csv(run_grid(load_experiment("region_map.json", threads=1)))
        parallel = emit_csv(run_grid(load_experiment("region_map.json", threads=8)))
        assert serial == parallel


# ========== FIXTURES ==========

class TestFixtures:
    """Reference instances with known ambiguity."""

    @pytest.mark.parametrize("x,alt,k,subpaths", [
        (two_path_exchange(), two_path_exchange_alt(), TWO_PATH_EXCHANGE_K, 2),
        (four_path_cycle(), four_path_cycle_alt(), FOUR_PATH_CYCLE_K, 4),
    ])
    def test_two_solutions_and_subpaths(self, x, alt, k, subpaths):
        result = enumerate_reconstructions(extract_kmer_set(x, k), x.m, x.n, Budget.unbounded())
        assert result.exhausted
        assert set(result.solutions) == {x, alt}
        assert count_maximal_shared_subpaths(difference_graph(x, alt, k)) == subpaths
