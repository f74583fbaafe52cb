"""Search-space variation analysis and the repeated-run experiment harness."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .oracle import Oracle, stable_hash
from .search import SearchConfig, SearchOutcome, _Run, run_search, score_outcome
from .space import (CellEncoding, SpaceSpec, TabularBenchmark, canonical_string,
                    enumerate_space, sample_uniform)
from .stats import (DegenerateMeanError, Alternative, coefficient_of_variation,
                    kendall_tau_b, mann_whitney_u, minmax_normalize)

log = logging.getLogger(__name__)


@dataclass
class VariationReport:
    per_arch_cv: dict[CellEncoding, float]
    per_arch_mean: dict[CellEncoding, float]
    var_ss: float
    excluded: list[CellEncoding]
    batch_size: int | None
    evals: int
    convention: str = "paper"

    @property
    def n_archs(self) -> int:
        return len(self.per_arch_cv) + len(self.excluded)


def _archs(space) -> list[CellEncoding]:
    if isinstance(space, SpaceSpec):
        return list(enumerate_space(space))
    if isinstance(space, TabularBenchmark):
        return sorted(space.accuracy)
    return list(space)


def variation_metric(space, oracle: Oracle, V: int = 10, convention: str = "paper",
                     batch_size: int | None = None) -> VariationReport:
    """Mean per-architecture CV of ``V`` oracle draws over a whole space.

    Architectures whose sample mean is numerically zero are excluded from the
    average and listed in ``excluded``.
    """
    if V < 2:
        raise ValueError("V must be >= 2")
    if batch_size is None:
        batch_size = getattr(getattr(oracle, "profile", None), "batch_size_label", None)
    cvs: dict[CellEncoding, float] = {}
    means: dict[CellEncoding, float] = {}
    excluded = []
    for arch in _archs(space):
        samples = oracle.present(oracle.evaluate(arch, V))
        try:
            cvs[arch] = coefficient_of_variation(samples, convention)
            means[arch] = float(np.mean(samples))
        except DegenerateMeanError:
            excluded.append(arch)
    if excluded:
        log.warning("%d architectures excluded: degenerate mean", len(excluded))
    var_ss = float(np.mean(list(cvs.values()))) if cvs else math.nan
    return VariationReport(cvs, means, var_ss, excluded, batch_size, V, convention)


def cv_accuracy_correlation(space, oracle: Oracle, bench: TabularBenchmark, V: int = 10,
                            report: VariationReport | None = None) -> float:
    """Kendall tau-b between per-architecture CV and ground-truth accuracy."""
    report = report or variation_metric(space, oracle, V)
    pairs = [(cv, bench[a]) for a, cv in report.per_arch_cv.items()]
    return kendall_tau_b(pairs)


def cv_mean_correlation(space, oracle: Oracle, V: int = 10,
                        report: VariationReport | None = None) -> float:
    """Kendall tau-b between per-architecture CV and mean score."""
    report = report or variation_metric(space, oracle, V)
    pairs = [(cv, report.per_arch_mean[a]) for a, cv in report.per_arch_cv.items()]
    return kendall_tau_b(pairs)


def tau_null_sd(n: int) -> float:
    """Standard deviation of Kendall's tau under independence for n tie-free pairs."""
    return math.sqrt(2.0 * (2 * n + 5) / (9.0 * n * (n - 1)))


def cv_ranker_search(space: SpaceSpec, oracle: Oracle, config: SearchConfig,
                     rng: np.random.Generator) -> SearchOutcome:
    """Random search ranking by MinMax(mean) + MinMax(variance/mean) over the N candidates."""
    run = _Run(space, oracle, config, rng)
    run.history = [run.encounter(sample_uniform(space, rng), 0) for _ in range(config.N)]
    if len(run.history) == 1:
        return run.outcome(run.history[0], 0)
    means, cvs = [], []
    for m in run.history:
        s = oracle.present(m.samples)
        means.append(float(np.mean(s)))
        cvs.append(coefficient_of_variation(s))
    score = np.add(minmax_normalize(means), minmax_normalize(cvs))
    top = np.flatnonzero(score == score.max())
    pick = int(top[run.tie_rng.integers(len(top))]) if len(top) > 1 else int(top[0])
    return run.outcome(run.history[pick], 0)


@dataclass
class GridCell:
    """One experiment configuration. ``oracle`` is forked per run."""

    space: str
    bench: TabularBenchmark
    oracle_profile: str
    oracle: Oracle
    config: SearchConfig

    @property
    def key(self) -> tuple:
        return (self.space, self.config.algorithm, self.config.evaluator, self.oracle_profile)


@dataclass
class RunRecord:
    space: str
    algorithm: str
    evaluator: str
    oracle_profile: str
    run: int
    seed: int
    selected_encoding: str
    accuracy: float
    cycles: int
    fresh_draws: int


@dataclass
class ExperimentResult:
    cell: GridCell
    runs: list[RunRecord]
    accuracies: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.accuracies = [r.accuracy for r in self.runs]

    @property
    def key(self) -> tuple:
        return self.cell.key

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies, ddof=1)) if len(self.accuracies) > 1 else 0.0


def run_seed(base_seed: int, cell: GridCell, run: int) -> int:
    """Seed shared by every evaluator, threshold and cache policy of a (space,
    algorithm, oracle) triple, so that those comparisons are paired."""
    return stable_hash(base_seed, cell.space, cell.config.algorithm, cell.oracle_profile, run) >> 1


def execute_run(cell: GridCell, run: int, base_seed: int, seed: int | None = None) -> RunRecord:
    seed = run_seed(base_seed, cell, run) if seed is None else seed
    config = cell.config.with_(seed=seed)
    oracle = cell.oracle.fork(seed)
    try:
        outcome = score_outcome(run_search(cell.bench.spec, oracle, config), cell.bench)
    except Exception as exc:
        raise RuntimeError(f"run {run} of cell {cell.key} failed: {exc}") from exc
    return RunRecord(cell.space, config.algorithm, config.evaluator, cell.oracle_profile, run,
                     seed, canonical_string(outcome.selected), outcome.selected_accuracy,
                     outcome.cycles_used, outcome.fresh_draws_used)


_WORKER_CELLS: list[GridCell] = []


def _init_worker(cells):
    global _WORKER_CELLS
    _WORKER_CELLS = cells


def _worker(args):
    ci, run, base_seed, seed = args
    return execute_run(_WORKER_CELLS[ci], run, base_seed, seed)


def run_experiment(grid: Sequence[GridCell], repeats: int | Sequence[int], base_seed: int = 0,
                   jobs: int = 1, seeds: Sequence[int] | None = None) -> list[ExperimentResult]:
    """R independently seeded runs per cell, aggregated in grid order.

    ``repeats`` may be a single R or one R per cell. ``seeds`` forces explicit
    per-run seeds (used to check determinism).
    """
    reps = [repeats] * len(grid) if isinstance(repeats, int) else list(repeats)
    if len(reps) != len(grid):
        raise ValueError("one repeat count per grid cell")
    if any(r < 2 for r in reps):
        raise ValueError("repeats must be >= 2")
    tasks = []
    for ci, r in enumerate(reps):
        for run in range(r):
            tasks.append((ci, run, base_seed, None if seeds is None else seeds[run]))
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(list(grid),)) as ex:
            records = list(ex.map(_worker, tasks, chunksize=max(1, len(tasks) // (jobs * 8))))
    else:
        records = [execute_run(grid[ci], run, bs, sd) for ci, run, bs, sd in tasks]
    results, pos = [], 0
    for cell, r in zip(grid, reps):
        results.append(ExperimentResult(cell, records[pos:pos + r]))
        pos += r
    return results


@dataclass
class SummaryRow:
    space: str
    algorithm: str
    oracle_profile: str
    mean_avg: float | None
    std_avg: float | None
    mean_stat: float | None
    std_stat: float | None
    p_value: float | None


def summarize(results: Iterable[ExperimentResult]) -> list[SummaryRow]:
    """Pair averaging and statistical cells; p is a two-sided Mann-Whitney test
    over the two lists of per-run accuracies."""
    groups: dict[tuple, dict[str, ExperimentResult]] = {}
    for res in results:
        space, alg, ev, prof = res.key
        groups.setdefault((space, alg, prof), {})[ev] = res
    rows = []
    for (space, alg, prof), by_ev in groups.items():
        avg, stat = by_ev.get("averaging"), by_ev.get("statistical")
        p = None
        if avg and stat:
            p = mann_whitney_u(stat.accuracies, avg.accuracies, Alternative.TWO_SIDED).p_value
        rows.append(SummaryRow(space, alg, prof,
                               avg.mean if avg else None, avg.std if avg else None,
                               stat.mean if stat else None, stat.std if stat else None, p))
    return rows


@dataclass
class SweepRow:
    threshold: float
    mean_accuracy: float
    std_accuracy: float
    relative_accuracy: float
    runs: int


def threshold_sweep(cell: GridCell, thresholds: Sequence[float], repeats: int,
                    base_seed: int = 0, baseline: float = 0.05, jobs: int = 1) -> list[SweepRow]:
    """Statistical-evaluator accuracy per threshold, relative to ``baseline``."""
    if not thresholds:
        raise ValueError("need at least one threshold")
    ts = sorted(set(float(t) for t in thresholds))
    if any(not 0 < t < 1 for t in ts):
        raise ValueError("thresholds must lie in (0, 1)")
    all_ts = ts if baseline in ts else sorted(ts + [baseline])
    grid = [GridCell(cell.space, cell.bench, cell.oracle_profile, cell.oracle,
                     cell.config.with_(evaluator="statistical", threshold=t)) for t in all_ts]
    results = run_experiment(grid, repeats, base_seed, jobs)
    by_t = {t: r for t, r in zip(all_ts, results)}
    base = by_t[baseline].mean
    return [SweepRow(t, by_t[t].mean, by_t[t].std, by_t[t].mean - base, len(by_t[t].runs))
            for t in ts]
