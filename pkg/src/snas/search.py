"""Random search, REA, greedy evolution and FreeREA over a cell space.

None of these functions sees ground-truth accuracy; outcomes are scored
afterwards with :func:`score_outcome`.
"""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .compare import CACHE_POLICIES, EVALUATORS, CachePolicy, EvalCache, EvaluatorKind, Selector
from .oracle import Oracle
from .space import (CellEncoding, SpaceSpec, TabularBenchmark, crossover, mutate,
                    mutations_all, sample_uniform)

ALGORITHMS = ("random", "rea", "greedy", "free_rea", "cv_ranker")


@dataclass(frozen=True)
class SearchConfig:
    algorithm: str = "random"
    N: int = 100
    P: int = 25
    S: int = 5
    C: int = 1000
    V: int = 10
    threshold: float = 0.05
    evaluator: str = "statistical"
    cache: str = "cached"
    hybrid_increment: int = 3
    seed: int = 0
    crossover: str = "uniform"
    stat_tie_break: str = "incumbent"
    free_rea_removal: str = "after"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.evaluator not in EVALUATORS:
            raise ValueError(f"unknown evaluator {self.evaluator!r}")
        if self.cache not in CACHE_POLICIES:
            raise ValueError(f"unknown cache policy {self.cache!r}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.P >= self.S >= 1:
            raise ValueError("need P >= S >= 1")
        if self.C < 0:
            raise ValueError("C must be >= 0")
        if self.V < 1:
            raise ValueError("V must be >= 1")
        if self.crossover not in ("uniform", "one_point"):
            raise ValueError(f"unknown crossover kind {self.crossover!r}")
        if self.stat_tie_break not in ("incumbent", "random"):
            raise ValueError(f"unknown tie-break {self.stat_tie_break!r}")
        if self.free_rea_removal not in ("after", "before"):
            raise ValueError(f"unknown removal order {self.free_rea_removal!r}")
        EvaluatorKind(self.evaluator, self.threshold)

    @property
    def evaluator_kind(self) -> EvaluatorKind:
        return EvaluatorKind(self.evaluator, self.threshold)

    @property
    def cache_policy(self) -> CachePolicy:
        return CachePolicy(self.cache, self.V, self.hybrid_increment)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **changes) -> "SearchConfig":
        return replace(self, **changes)


@dataclass
class PopulationMember:
    arch: CellEncoding
    birth_cycle: int
    samples: np.ndarray = field(repr=False)


@dataclass
class SearchOutcome:
    selected: CellEncoding
    cycles_used: int
    fresh_draws_used: int
    history: list[tuple[CellEncoding, int]]
    selected_accuracy: float | None = None


def score_outcome(outcome: SearchOutcome, bench: TabularBenchmark) -> SearchOutcome:
    outcome.selected_accuracy = float(bench[outcome.selected])
    return outcome


class _Run:
    """State shared by all algorithms for one seeded run."""

    def __init__(self, spec: SpaceSpec, oracle: Oracle, config: SearchConfig,
                 rng: np.random.Generator, tie_rng: np.random.Generator | None = None):
        self.spec = spec
        self.oracle = oracle
        self.config = config
        self.rng = rng
        # ties use their own stream so that tie-breaking never shifts the search rng
        self.tie_rng = tie_rng if tie_rng is not None else np.random.default_rng(
            [config.seed, 0x7E])
        self.cache = EvalCache(config.cache_policy)
        self.selector = Selector(config.evaluator_kind, self.cache, oracle, self.tie_rng,
                                 config.stat_tie_break)
        self.history: list[PopulationMember] = []

    def encounter(self, arch: CellEncoding, cycle: int) -> PopulationMember:
        return PopulationMember(arch, cycle, self.cache.get_samples(self.oracle, arch))

    def top(self, members: list[PopulationMember], k: int = 1) -> list[int]:
        return self.selector.top([m.arch for m in members], [m.samples for m in members], k)

    def outcome(self, winner: PopulationMember, cycles: int) -> SearchOutcome:
        return SearchOutcome(winner.arch, cycles, self.cache.fresh_draws,
                             [(m.arch, m.birth_cycle) for m in self.history])

    def finish(self, cycles: int) -> SearchOutcome:
        return self.outcome(self.history[self.top(self.history)[0]], cycles)


def random_search(space: SpaceSpec, oracle: Oracle, config: SearchConfig,
                  rng: np.random.Generator, candidates: list[CellEncoding] | None = None,
                  tie_rng: np.random.Generator | None = None) -> SearchOutcome:
    """Sample N architectures (with replacement) and return the best by the evaluator.

    ``candidates`` overrides sampling, e.g. to rank a whole enumerated space.
    """
    run = _Run(space, oracle, config, rng, tie_rng)
    archs = candidates if candidates is not None else [
        sample_uniform(space, rng) for _ in range(config.N)]
    run.history = [run.encounter(a, 0) for a in archs]
    return run.finish(0)


def _init_population(run: _Run) -> deque:
    population: deque = deque()
    while len(population) < run.config.P:
        member = run.encounter(sample_uniform(run.spec, run.rng), 0)
        run.history.append(member)
        population.append(member)
    return population


def _tournament(run: _Run, population: deque) -> list[PopulationMember]:
    idx = run.rng.integers(len(population), size=run.config.S)
    return [population[int(i)] for i in idx]


def rea_search(space: SpaceSpec, oracle: Oracle, config: SearchConfig,
               rng: np.random.Generator, tie_rng: np.random.Generator | None = None) -> SearchOutcome:
    """Regularized (aging) evolution with single-edge mutation."""
    run = _Run(space, oracle, config, rng, tie_rng)
    population = _init_population(run)
    cycle = 0
    while len(run.history) < config.C:
        cycle += 1
        cands = _tournament(run, population)
        parent = cands[run.top(cands)[0]]
        child = run.encounter(mutate(parent.arch, rng), cycle)
        run.history.append(child)
        population.append(child)
        population.popleft()
    return run.finish(cycle)


def greedy_evo_search(space: SpaceSpec, oracle: Oracle, config: SearchConfig,
                      rng: np.random.Generator, tie_rng: np.random.Generator | None = None) -> SearchOutcome:
    """REA variant that evaluates the parent's whole Hamming-1 neighbourhood.

    Every child enters the history; only the best child joins the population.
    """
    run = _Run(space, oracle, config, rng, tie_rng)
    population = _init_population(run)
    cycle = 0
    while len(run.history) < config.C:
        cycle += 1
        cands = _tournament(run, population)
        parent = cands[run.top(cands)[0]]
        children = [run.encounter(c, cycle) for c in mutations_all(parent.arch)]
        run.history.extend(children)
        population.append(children[run.top(children)[0]])
        population.popleft()
    return run.finish(cycle)


def free_rea_search(space: SpaceSpec, oracle: Oracle, config: SearchConfig,
                    rng: np.random.Generator, tie_rng: np.random.Generator | None = None) -> SearchOutcome:
    """REA variant breeding two mutants and one crossover child per cycle."""
    if config.P < 3:
        raise ValueError("FreeREA needs a population of at least 3")
    if config.S < 2:
        raise ValueError("FreeREA needs a tournament of at least 2")
    run = _Run(space, oracle, config, rng, tie_rng)
    population = _init_population(run)
    cycle = 0
    while len(run.history) < config.C:
        cycle += 1
        cands = _tournament(run, population)
        i1, i2 = run.top(cands, 2)
        p1, p2 = cands[i1], cands[i2]
        c1 = run.encounter(mutate(p1.arch, rng), cycle)
        c2 = run.encounter(mutate(p2.arch, rng), cycle)
        c3 = run.encounter(crossover(p1.arch, p2.arch, rng, config.crossover), cycle)
        run.history.extend((c1, c2, c3))
        if config.free_rea_removal == "before":
            for _ in range(3):
                population.popleft()
            population.extend((c1, c2, c3))
        else:
            population.extend((c1, c2, c3))
            for _ in range(3):
                population.popleft()
    return run.finish(cycle)


SEARCHES: dict[str, Callable[..., SearchOutcome]] = {
    "random": random_search,
    "rea": rea_search,
    "greedy": greedy_evo_search,
    "free_rea": free_rea_search,
}


def run_search(space: SpaceSpec, oracle: Oracle, config: SearchConfig,
               rng: np.random.Generator | None = None) -> SearchOutcome:
    """Dispatch on ``config.algorithm``; ``rng`` defaults to one seeded from ``config.seed``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if config.algorithm == "cv_ranker":
        from .analysis import cv_ranker_search
        return cv_ranker_search(space, oracle, config, rng)
    return SEARCHES[config.algorithm](space, oracle, config, rng)
