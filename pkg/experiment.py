"""
Monte Carlo Experiment Engine

Estimates, cell by cell over an (n, alpha, beta) grid, how often random
source sets are uniquely recoverable and how often each repeat event occurs,
next to the closed-form bounds for the same cell.

DETERMINISM:
- Cell seeds are derived from (master_seed, cell_index), trial seeds from
  (cell_seed, trial_index), both with numpy SeedSequence spawn keys. No
  result depends on worker count or scheduling.
- Cells are evaluated in a multiprocessing Pool when threads > 1; Pool.map
  keeps input order, and output is sorted by (n, alpha, beta) regardless.

CONFIGURATION (JSON):
    {
      "n_values": [512],
      "alpha_grid": [0.3333333333333333],
      "beta_grid": [1.5, 2.0],          # or "k_values": [8, 10, 12]
      "m_values": [8],                  # optional, replaces alpha_grid
      "trials": 500,
      "master_seed": 20240101,
      "budget": {"max_solutions": 2, "max_expansions": 1000000},
      "measures": ["uniqueness", "eventD", "V"],
      "threads": 4
    }

KMERLIMITS_THREADS sets the default worker count when the config omits it.
"""

import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from core_model import ParameterError, Params, derive_params, derive_seed, generate_sources, round_half_up
from events import EventKind, count_witnesses, detect_repeat, DETECTORS
from reconstruct import Budget, Uniqueness, is_unique
from theory import (
    RegionClass,
    classify_region,
    event_bounds,
    feasible_boundary,
    infeasible_boundary,
    moments_U,
    moments_V,
)

logger = logging.getLogger("experiment")

DEFAULT_THREADS = int(os.environ.get("KMERLIMITS_THREADS", "1"))
CSV_COLUMNS = ["alpha", "beta", "n", "m", "k", "trials", "measure", "count", "estimate", "stderr", "verdict"]
UNKNOWN_ROW = "unknown"
SKIPPED_ROW = "skipped"
RULE_OF_THREE_SUFFIX = "_rule_of_three"
ESTIMATOR_CHUNK = 100_000
# Upper bound on symbols drawn per chunk by estimate_statistic_mean
STATISTIC_CHUNK_SYMBOLS = 4_000_000
SVG_HASH_SALT = "kmerlimits"


class ConfigError(ValueError):
    """Raised when an experiment configuration is malformed."""
    pass


class ExperimentError(RuntimeError):
    """Raised when a grid cell fails; the message names the cell."""
    pass


class Measure(Enum):
    UNIQUENESS = "uniqueness"
    EVENT_A = "eventA"
    EVENT_B = "eventB"
    EVENT_C = "eventC"
    EVENT_D = "eventD"
    EVENT_H = "eventH"
    V = "V"
    U = "U"
    REPEAT_FREE = "repeat_free"


EVENT_MEASURES = {
    Measure.EVENT_A: EventKind.A,
    Measure.EVENT_B: EventKind.B,
    Measure.EVENT_C: EventKind.C,
    Measure.EVENT_D: EventKind.D,
    Measure.EVENT_H: EventKind.H,
}


# =============================================================================
# CONFIG AND REPORTS
# =============================================================================

@dataclass
class ExperimentConfig:
    n_values: List[int]
    alpha_grid: List[float]
    beta_grid: List[float]
    trials: int
    master_seed: int
    measures: List[Measure]
    budget: Budget = field(default_factory=Budget)
    k_values: Optional[List[int]] = None
    m_values: Optional[List[int]] = None
    threads: int = DEFAULT_THREADS

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.n_values:
            raise ConfigError("n_values is empty")
        if not self.alpha_grid and not self.m_values:
            raise ConfigError("alpha_grid is empty")
        if not self.beta_grid and not self.k_values:
            raise ConfigError("beta_grid is empty")
        if not self.measures:
            raise ConfigError("at least one measure is required")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")


def config_from_dict(data: Dict) -> ExperimentConfig:
    try:
        budget_data = data.get("budget", {})
        budget = Budget(
            max_solutions=budget_data.get("max_solutions", 2),
            max_expansions=budget_data.get("max_expansions", Budget().max_expansions),
        )
        return ExperimentConfig(
            n_values=[int(n) for n in data["n_values"]],
            alpha_grid=[float(a) for a in data.get("alpha_grid", [])],
            beta_grid=[float(b) for b in data.get("beta_grid", [])],
            trials=int(data["trials"]),
            master_seed=int(data["master_seed"]),
            measures=[Measure(name) for name in data["measures"]],
            budget=budget,
            k_values=[int(k) for k in data["k_values"]] if "k_values" in data else None,
            m_values=[int(m) for m in data["m_values"]] if "m_values" in data else None,
            threads=int(data.get("threads", DEFAULT_THREADS)),
        )
    except KeyError as e:
        raise ConfigError(f"missing config field {e.args[0]!r}") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid config: {e}") from e


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
    return config_from_dict(data)


@dataclass
class MeasureResult:
    measure: Measure
    count: int
    trials: int
    estimate: float
    stderr: float
    rule_of_three: Optional[float] = None
    mean: Optional[float] = None
    mean_stderr: Optional[float] = None


@dataclass
class CellReport:
    alpha: float
    beta: float
    n: int
    m: int
    k: int
    trials: int
    results: Dict[Measure, MeasureResult]
    unknown_count: int
    region: Optional[RegionClass]
    bounds: Dict[str, float]
    skipped: bool = False
    skip_reason: str = ""

    def estimate(self, measure: Measure) -> float:
        return self.results[measure].estimate


def proportion(count: int, trials: int) -> Tuple[float, float, Optional[float]]:
    """Estimate, normal-approximation standard error and rule-of-three bound."""
    p = count / trials
    se = math.sqrt(p * (1.0 - p) / trials)
    rule = 3.0 / trials if count in (0, trials) else None
    return p, se, rule


def _mean_and_se(values: Sequence[float]) -> Tuple[float, float]:
    data = np.asarray(values, dtype=float)
    if data.size < 2:
        return float(data.mean()), 0.0
    return float(data.mean()), float(data.std(ddof=1) / math.sqrt(data.size))


# =============================================================================
# CELLS
# =============================================================================

def _evaluate_trial(params: Params, seed: int, measures: Sequence[Measure], budget: Budget) -> Dict[Measure, Tuple[int, float]]:
    """One random instance -> {measure: (indicator, statistic)}."""
    x = generate_sources(params, seed)
    k = params.k
    outcome = {}
    for measure in measures:
        if measure is Measure.UNIQUENESS:
            verdict = is_unique(x, k, budget)
            # indicator 1 = non-unique, statistic 1 = unknown
            outcome[measure] = (int(verdict is Uniqueness.AMBIGUOUS), float(verdict is Uniqueness.UNKNOWN))
        elif measure in EVENT_MEASURES:
            kind = EVENT_MEASURES[measure]
            if x.m < 2 and kind in (EventKind.D, EventKind.H):
                outcome[measure] = (0, 0.0)
            else:
                outcome[measure] = (int(DETECTORS[kind](x, k) is not None), 0.0)
        elif measure in (Measure.V, Measure.U):
            kind = EventKind.D if measure is Measure.V else EventKind.H
            value = count_witnesses(x, k, kind) if x.m >= 2 else 0
            outcome[measure] = (int(value > 0), float(value))
        elif measure is Measure.REPEAT_FREE:
            outcome[measure] = (int(detect_repeat(x, k) is not None), 0.0)
    return outcome


def _cell_bounds(params: Params) -> Dict[str, float]:
    bounds = event_bounds(params)
    if params.m >= 2:
        v, u = moments_V(params), moments_U(params)
        bounds.update({"E_V": v.e_first, "pz_V": v.pz_lower, "E_U": u.e_first, "pz_U": u.pz_lower})
    return bounds


def _trial_job(job):
    params, seed, measures, budget = job
    return _evaluate_trial(params, seed, measures, budget)


def run_cell(params: Params, trials: int, seed: int, measures: Sequence[Measure],
             budget: Optional[Budget] = None, threads: int = 1) -> CellReport:
    """Evaluate `trials` random instances of one parameter point."""
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    measures = list(measures)
    if not measures:
        raise ConfigError("at least one measure is required")
    budget = budget or Budget()

    jobs = [(params, derive_seed(seed, t), measures, budget) for t in range(trials)]
    if threads > 1:
        with Pool(threads) as pool:
            outcomes = pool.map(_trial_job, jobs)
    else:
        outcomes = [_trial_job(job) for job in jobs]

    results = {}
    unknown = 0
    for measure in measures:
        indicators = [o[measure][0] for o in outcomes]
        stats = [o[measure][1] for o in outcomes]
        count = sum(indicators)
        p, se, rule = proportion(count, trials)
        result = MeasureResult(measure, count, trials, p, se, rule)
        if measure in (Measure.V, Measure.U):
            result.mean, result.mean_stderr = _mean_and_se(stats)
        if measure is Measure.UNIQUENESS:
            unknown = int(sum(stats))
        results[measure] = result

    alpha, beta = params.effective_alpha, params.effective_beta
    return CellReport(
        alpha=alpha, beta=beta, n=params.n, m=params.m, k=params.k, trials=trials,
        results=results, unknown_count=unknown,
        region=classify_region(max(alpha, 0.0), beta),
        bounds=_cell_bounds(params),
    )


def _skipped_cell(n: int, alpha: Optional[float], beta: Optional[float],
                  m: Optional[int], k: Optional[int], reason: str) -> CellReport:
    """Placeholder for a grid point whose (m, k) is not a valid parameter set."""
    scale = math.log2(n) if n > 1 else 1.0
    if alpha is None:
        alpha = math.log2(m) / scale if m else 0.0
    if beta is None:
        beta = k / scale if k else 0.0
    return CellReport(
        alpha=alpha, beta=beta, n=n, m=m or 0, k=k or 0, trials=0,
        results={}, unknown_count=0, region=None, bounds={},
        skipped=True, skip_reason=reason,
    )


def _grid_cells(config: ExperimentConfig) -> Tuple[List[Params], List[CellReport]]:
    """Valid cells sorted by (n, alpha, beta), plus reports for the skipped ones."""
    cells = []
    skipped = []
    for n in config.n_values:
        if config.m_values is not None:
            m_axis = [(None, m) for m in config.m_values]
        else:
            m_axis = [(alpha, None) for alpha in config.alpha_grid]
        for alpha, m in m_axis:
            if config.k_values is not None:
                k_axis = [(None, k) for k in config.k_values]
            else:
                k_axis = [(beta, None) for beta in config.beta_grid]
            for beta, k in k_axis:
                try:
                    if alpha is not None and beta is not None:
                        cells.append(derive_params(n, alpha, beta))
                        continue
                    derived_m = m if m is not None else max(1, round_half_up(n ** alpha))
                    if k is None:
                        k = derive_params(n, 0.0, beta).k
                    cells.append(Params(n=n, m=derived_m, k=k, alpha=alpha, beta=beta))
                except ParameterError as e:
                    logger.warning(f"[Grid] skipping n={n} alpha={alpha} beta={beta} m={m} k={k}: {e}")
                    skipped.append(_skipped_cell(n, alpha, beta, m, k, str(e)))
    cells.sort(key=lambda p: (p.n, p.effective_alpha, p.effective_beta))
    return cells, skipped


def _cell_job(job):
    index, params, config = job
    seed = derive_seed(config.master_seed, index)
    try:
        report = run_cell(params, config.trials, seed, config.measures, config.budget)
    except Exception as e:
        raise ExperimentError(
            f"cell {index} (n={params.n}, m={params.m}, k={params.k}) failed: {e}"
        ) from e
    logger.info(f"[Grid] cell {index} n={params.n} m={params.m} k={params.k} done")
    return report


def run_grid(config: ExperimentConfig) -> List[CellReport]:
    """
    Evaluate every cell of the grid; output sorted by (n, alpha, beta).
    Grid points without valid parameters come back as skipped reports.
    """
    cells, skipped = _grid_cells(config)
    if not cells:
        raise ConfigError("no valid cells in the grid")
    jobs = [(index, params, config) for index, params in enumerate(cells)]
    logger.info(f"[Grid] {len(jobs)} cells x {config.trials} trials on {config.threads} worker(s)")

    if config.threads > 1:
        with Pool(config.threads) as pool:
            reports = pool.map(_cell_job, jobs)
    else:
        reports = [_cell_job(job) for job in jobs]
    return sorted(reports + skipped, key=lambda r: (r.n, r.alpha, r.beta))


# =============================================================================
# OUTPUT
# =============================================================================

def emit_csv(reports: Sequence[CellReport]) -> str:
    """
    One row per measure and cell. Extra rows: `unknown` after uniqueness,
    `<measure>_rule_of_three` when a count is 0 or trials, and a single
    `skipped` row (verdict `skipped`, empty estimate) for a skipped cell.
    """
    if not reports:
        raise ValueError("no reports to write")
    rows = []
    for report in reports:
        base = {"alpha": report.alpha, "beta": report.beta, "n": report.n, "m": report.m,
                "k": report.k, "trials": report.trials}
        if report.skipped:
            rows.append({**base, "measure": SKIPPED_ROW, "count": 0, "estimate": math.nan,
                         "stderr": math.nan, "verdict": SKIPPED_ROW})
            continue
        base["verdict"] = report.region.verdict.value
        for measure, result in report.results.items():
            rows.append({**base, "measure": measure.value, "count": result.count,
                         "estimate": result.estimate, "stderr": result.stderr})
            if result.rule_of_three is not None:
                rows.append({**base, "measure": measure.value + RULE_OF_THREE_SUFFIX, "count": result.count,
                             "estimate": result.rule_of_three, "stderr": math.nan})
            if measure is Measure.UNIQUENESS:
                p, se, _ = proportion(report.unknown_count, report.trials)
                rows.append({**base, "measure": UNKNOWN_ROW, "count": report.unknown_count,
                             "estimate": p, "stderr": se})
    frame = pd.DataFrame(rows, columns=CSV_COLUMNS)
    return frame.to_csv(index=False, lineterminator="\n")


def read_csv(text: str) -> pd.DataFrame:
    """Parse emit_csv output back into a DataFrame."""
    return pd.read_csv(io.StringIO(text), dtype={"measure": str, "verdict": str})


def _edges(values: List[float]) -> np.ndarray:
    if len(values) == 1:
        return np.array([values[0] - 0.25, values[0] + 0.25])
    mids = [(a + b) / 2 for a, b in zip(values, values[1:])]
    return np.array([2 * values[0] - mids[0], *mids, 2 * values[-1] - mids[-1]])


def emit_svg_heatmap(reports: Sequence[CellReport], measure: Measure) -> str:
    """
    Heatmap of one measure over (alpha, beta) with both region boundaries
    drawn. Skipped cells stay blank and carry a gray cross.
    """
    usable = [r for r in reports if not r.skipped and measure in r.results]
    if not usable:
        raise ValueError(f"no reports carry measure {measure.value}")
    n = max(r.n for r in usable)
    usable = [r for r in usable if r.n == n]
    skipped = [r for r in reports if r.skipped and r.n == n]

    alphas = sorted({r.alpha for r in usable + skipped})
    betas = sorted({r.beta for r in usable + skipped})
    grid = np.full((len(betas), len(alphas)), np.nan)
    for r in usable:
        grid[betas.index(r.beta), alphas.index(r.alpha)] = r.results[measure].estimate

    x_edges, y_edges = _edges(alphas), _edges(betas)
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig = Figure(figsize=(6, 4.5))
        ax = fig.add_subplot(1, 1, 1)
        mesh = ax.pcolormesh(x_edges, y_edges, np.ma.masked_invalid(grid), cmap="viridis",
                             vmin=0.0, vmax=1.0, shading="flat")
        mesh.set_gid("heatmap")
        fig.colorbar(mesh, ax=ax, label=measure.value)
        if skipped:
            ax.scatter([r.alpha for r in skipped], [r.beta for r in skipped], marker="x",
                       color="gray", gid="skipped-cells")

        xs = np.linspace(x_edges[0], x_edges[-1], 64)
        ax.plot(xs, [feasible_boundary(a) for a in xs], color="white", linewidth=1.5,
                gid="boundary-feasible")
        ax.plot(xs, [infeasible_boundary(a) for a in xs], color="red", linewidth=1.5,
                linestyle="--", gid="boundary-infeasible")
        ax.set_xlim(x_edges[0], x_edges[-1])
        ax.set_ylim(y_edges[0], y_edges[-1])
        ax.set_xlabel("alpha")
        ax.set_ylabel("beta")
        ax.set_title(f"{measure.value}, n={n}")

        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


# =============================================================================
# ESTIMATORS
# =============================================================================

def _chunks(trials: int, chunk: int = ESTIMATOR_CHUNK):
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        yield size
        done += size


def _bits(rng: np.random.Generator, rows: int, width: int) -> np.ndarray:
    return rng.integers(0, 2, size=(rows, width), dtype=np.uint8)


def estimate_overlap(k: int, gap: int, trials: int, seed: int) -> Tuple[float, float]:
    """Empirical Pr(x(1) = x(1 + gap)) for one uniform source of length k + gap."""
    if gap < 1:
        raise ValueError("gap must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    hits = 0
    for size in _chunks(trials):
        bits = _bits(rng, size, k + gap)
        hits += int((bits[:, :k] == bits[:, gap:gap + k]).all(axis=1).sum())
    p, se, _ = proportion(hits, trials)
    return p, se


def estimate_joint_overlap(k: int, gap: int, trials: int, seed: int) -> Tuple[float, float]:
    """Empirical Pr(x_i(1) = x_j(1) and x_i(1+gap) = x_j(1+gap)) for independent sources."""
    gap = abs(gap)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    hits = 0
    for size in _chunks(trials):
        equal = _bits(rng, size, k + gap) == _bits(rng, size, k + gap)
        first = equal[:, :k].all(axis=1)
        second = equal[:, gap:gap + k].all(axis=1)
        hits += int((first & second).sum())
    p, se, _ = proportion(hits, trials)
    return p, se


def estimate_overlapped_pair(k: int, gap_i: int, gap_j: int, trials: int, seed: int) -> Tuple[float, float]:
    """
    Empirical Pr(x_i(1) = x_j(c) and x_i(1+gap_i) = x_j(c+gap_j)) with
    independent sources and gap_i != gap_j, both below k in magnitude.
    """
    if gap_i == gap_j:
        raise ValueError("equal gaps describe a single longer repeat")
    if not (0 <= gap_i < k and abs(gap_j) < k):
        raise ValueError("gaps must be below k")
    c = max(0, -gap_j)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    hits = 0
    for size in _chunks(trials):
        xi = _bits(rng, size, k + gap_i)
        xj = _bits(rng, size, k + abs(gap_j))
        first = (xi[:, :k] == xj[:, c:c + k]).all(axis=1)
        second = (xi[:, gap_i:gap_i + k] == xj[:, c + gap_j:c + gap_j + k]).all(axis=1)
        hits += int((first & second).sum())
    p, se, _ = proportion(hits, trials)
    return p, se


def estimate_statistic_mean(params: Params, statistic: str, trials: int, seed: int) -> Tuple[float, float, float]:
    """
    Mean and standard error of V or U over random instances, plus the
    fraction of instances where the statistic is positive.
    """
    if params.m < 2:
        raise ValueError("statistics need m >= 2")
    if statistic not in ("V", "U"):
        raise ValueError(f"unknown statistic {statistic!r}")

    if params.k > 63:
        raise ValueError("vectorised statistics need k <= 63")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    chunk_rows = max(1, STATISTIC_CHUNK_SYMBOLS // (params.m * params.n))
    values: List[np.ndarray] = []
    for size in _chunks(trials, chunk_rows):
        bits = rng.integers(0, 2, size=(size, params.m, params.n), dtype=np.uint8)
        words = _window_words(bits, params.k)
        if statistic == "V":
            chunk = np.zeros(size, dtype=np.int64)
            for i in range(params.m):
                for j in range(i + 1, params.m):
                    chunk += (words[:, i, :] == words[:, j, :]).sum(axis=1)
        else:
            chunk = np.array([_u_from_words(w) for w in words], dtype=np.int64)
        values.append(chunk)

    data = np.concatenate(values)
    mean, se = _mean_and_se(data)
    return mean, se, float((data > 0).mean())


def _window_words(bits: np.ndarray, k: int) -> np.ndarray:
    """Packed k-mer values along the last axis of a 0/1 array."""
    n_prime = bits.shape[-1] - k + 1
    words = np.zeros(bits.shape[:-1] + (n_prime,), dtype=np.uint64)
    for t in range(k):
        words = (words << np.uint64(1)) | bits[..., t:t + n_prime].astype(np.uint64)
    return words


def _u_from_words(words: np.ndarray) -> int:
    total = 0
    for i in range(words.shape[0]):
        for j in range(i + 1, words.shape[0]):
            a_idx, c_idx = np.nonzero(words[i][:, None] == words[j][None, :])
            if a_idx.size > 1:
                _, counts = np.unique(c_idx - a_idx, return_counts=True)
                total += int((counts * (counts - 1) // 2).sum())
    return total
