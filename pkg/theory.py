"""
Closed-Form Limits

Region classification over (alpha, beta), finite-n union bounds for the
repeat events, the V and U statistics with their moment formulas, and the
Paley-Zygmund lower bounds built from them.

Every n^(-beta) factor is evaluated as 2^(-k) with the instance's integer k,
so finite-n values never depend on how beta was rounded.

    region            condition
    feasible          beta > max(2*alpha + 1, alpha + 2)
    infeasible        beta < max(2*alpha + 1, alpha + 3/2)
    unknown           otherwise, including both equality lines
    repeat_free       beta > 2*alpha + 2 (no k-mer repeats at all)
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from core_model import Params, SourceSet
from events import count_equal_gap_pairs, count_same_position

U_LIMIT = 4.0 ** -7
V_LIMIT = 0.25
_LOG_FLOAT_MAX = math.log(1.0e300)


class Verdict(Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class RegionClass:
    verdict: Verdict
    binding_constraint: str
    repeat_free: bool = False


# =============================================================================
# REGION
# =============================================================================

def feasible_boundary(alpha: float) -> float:
    return max(2 * alpha + 1, alpha + 2)


def infeasible_boundary(alpha: float) -> float:
    return max(2 * alpha + 1, alpha + 1.5)


def repeat_free_boundary(alpha: float) -> float:
    return 2 * alpha + 2


def classify_region(alpha: float, beta: float) -> RegionClass:
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")

    repeat_free = beta > repeat_free_boundary(alpha)
    upper = feasible_boundary(alpha)
    lower = infeasible_boundary(alpha)

    if beta > upper:
        binding = "beta > 2*alpha+1" if 2 * alpha + 1 >= alpha + 2 else "beta > alpha+2"
        return RegionClass(Verdict.FEASIBLE, binding, repeat_free)
    if beta < lower:
        binding = "beta < 2*alpha+1" if 2 * alpha + 1 >= alpha + 1.5 else "beta < alpha+3/2"
        return RegionClass(Verdict.INFEASIBLE, binding, repeat_free)
    if beta in (upper, lower):
        return RegionClass(Verdict.UNKNOWN, "on boundary", repeat_free)
    return RegionClass(Verdict.UNKNOWN, "between boundaries", repeat_free)


# =============================================================================
# UNION BOUNDS
# =============================================================================

def _p(params: Params) -> Tuple[int, int, int, float]:
    return params.n, params.m, params.k, 2.0 ** -params.k


def repeat_free_bound(params: Params) -> float:
    """m^2 n^2 2^-k + m n^2 2^-k: any k-mer repeat across or within sources."""
    n, m, k, q = _p(params)
    return (m * m * n * n + m * n * n) * q


def cross_repeat_bound(params: Params) -> float:
    """C(m,2) n^2 2^-k: some pair of sources shares a k-mer."""
    n, m, k, q = _p(params)
    return math.comb(m, 2) * n * n * q


def residual_error_bound(params: Params) -> float:
    """
    Sum over c = 2..m of C(m,c) n^c (cn)^c 2^(-kc): error with none of A to D,
    which needs at least c shared subpaths among c sources. Evaluated in log
    space; returns inf when a term overflows.
    """
    n, m, k, _ = _p(params)
    total = 0.0
    for c in range(2, m + 1):
        log_term = (
            math.lgamma(m + 1) - math.lgamma(c + 1) - math.lgamma(m - c + 1)
            + c * (math.log(n) + math.log(c * n) - k * math.log(2))
        )
        if log_term > _LOG_FLOAT_MAX:
            return math.inf
        total += math.exp(log_term)
    return total


def event_bounds(params: Params) -> Dict[str, float]:
    """Finite-n union bounds for A, B, C, D, plus the residual and total error bounds."""
    n, m, k, q = _p(params)
    bounds = {
        "A": m * n * n * q,
        "B": (m ** 3) * (n ** 3) * 2 * k * q * q + (m * m) * (n * n) * (2 * k) ** 2 * q * q,
        "C": 2 * m * m * n * q,
        "D": m * m * n * q,
    }
    bounds["E_residual"] = residual_error_bound(params)
    bounds["E_total"] = sum(bounds[key] for key in ("A", "B", "C", "D", "E_residual"))
    return bounds


def overlap_probability(k: int, gap: int) -> float:
    """Pr(x(a) = x(a + gap)) for one uniform source, gap >= 1."""
    if gap < 1:
        raise ValueError("gap must be positive")
    return 2.0 ** -k


def joint_overlap_probability(k: int, gap: int) -> float:
    """Pr(x_i(a) = x_j(a) and x_i(a+gap) = x_j(a+gap)) for two independent sources."""
    gap = abs(gap)
    return 2.0 ** -(k + min(gap, k))


def overlapped_pair_bound(k: int) -> float:
    """Upper bound 2^-2k on two overlapping repeats that are not one longer repeat."""
    return 2.0 ** (-2 * k)


# =============================================================================
# STATISTICS AND MOMENTS
# =============================================================================

def v_statistic(x: SourceSet, k: int) -> int:
    """V: pairs of sources sharing a k-mer at a common position."""
    if x.m < 2:
        raise ValueError("V needs at least two sources")
    return count_same_position(x, k)


def u_statistic(x: SourceSet, k: int) -> int:
    """U: pairs of shared k-mers with equal gaps in two sources."""
    if x.m < 2:
        raise ValueError("U needs at least two sources")
    return count_equal_gap_pairs(x, k)


@dataclass(frozen=True)
class MomentReport:
    statistic: str
    e_first: float
    e_second_bound: float
    pz_lower: float
    pz_asymptotic: float
    reference: float
    value: Optional[int] = None


def _pz(first: float, second: float) -> float:
    if second <= 0:
        return 0.0
    return min(1.0, first * first / second)


def moments_V(params: Params, x: Optional[SourceSet] = None) -> MomentReport:
    """E[V] = C(m,2)(n-k+1)2^-k exactly; E[V^2] <= m^4 n^2 2^-2k + 2 m^2 n k 2^-k."""
    n, m, k, q = _p(params)
    if m < 2:
        raise ValueError("V moments need m >= 2")
    first = math.comb(m, 2) * params.n_prime * q
    second = (m ** 4) * n * n * q * q + 2 * m * m * n * k * q
    asymptotic = 1.0 / (4.0 + 8.0 * k / (m * m * n * q))
    value = v_statistic(x, k) if x is not None else None
    return MomentReport("V", first, second, _pz(first, second), asymptotic, V_LIMIT, value)


def moments_U(params: Params, x: Optional[SourceSet] = None) -> MomentReport:
    """E[U] >= C(m,2)(n'/4)^3 2^-2k; E[U^2] <= (m^2 n^3 2^-2k)^2 + m^2 n^3 (2k)^3 2^-2k."""
    n, m, k, q = _p(params)
    if m < 2:
        raise ValueError("U moments need m >= 2")
    first = math.comb(m, 2) * (params.n_prime / 4.0) ** 3 * q * q
    core = m * m * n ** 3 * q * q
    second = core * core + m * m * n ** 3 * (2 * k) ** 3 * q * q
    asymptotic = U_LIMIT / (1.0 + 8.0 * k ** 3 / (m * m * n ** 3 * q * q))
    value = u_statistic(x, k) if x is not None else None
    return MomentReport("U", first, second, _pz(first, second), asymptotic, U_LIMIT, value)


def bounds_table(params: Params) -> List[Tuple[str, float]]:
    """Every closed-form value for one parameter point, in display order."""
    rows = [
        ("n", float(params.n)),
        ("m", float(params.m)),
        ("k", float(params.k)),
        ("alpha", params.effective_alpha),
        ("beta", params.effective_beta),
        ("repeat_free_bound", repeat_free_bound(params)),
        ("cross_repeat_bound", cross_repeat_bound(params)),
    ]
    rows.extend((f"bound_{name}", value) for name, value in event_bounds(params).items())
    if params.m >= 2:
        for report in (moments_V(params), moments_U(params)):
            rows.append((f"E[{report.statistic}]", report.e_first))
            rows.append((f"E[{report.statistic}^2]_bound", report.e_second_bound))
            rows.append((f"pz_{report.statistic}", report.pz_lower))
            rows.append((f"pz_{report.statistic}_asymptotic", report.pz_asymptotic))
    return rows
