"""Selecting the best of several noisy sample sets.

Statistical selection keeps an incumbent and replaces it only when a
candidate is stochastically greater at the chosen significance level
(one-sided Mann-Whitney). The averaging baseline ranks by sample mean.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .oracle import Oracle
from .space import CellEncoding
from .stats import one_sided_pvalues

EVALUATORS = ("averaging", "statistical")
CACHE_POLICIES = ("cached", "on_the_fly", "hybrid")


@dataclass(frozen=True)
class EvaluatorKind:
    tag: str = "statistical"
    threshold: float = 0.05

    def __post_init__(self):
        if self.tag not in EVALUATORS:
            raise ValueError(f"unknown evaluator {self.tag!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")


@dataclass(frozen=True)
class CachePolicy:
    tag: str = "cached"
    initial_draws: int = 10
    hybrid_increment: int = 3

    def __post_init__(self):
        if self.tag not in CACHE_POLICIES:
            raise ValueError(f"unknown cache policy {self.tag!r}")
        if self.initial_draws < 1 or self.hybrid_increment < 1:
            raise ValueError("draw counts must be >= 1")


@dataclass
class EvalCache:
    """Per-run sample store. ``fresh_draws`` meters every new oracle draw."""

    policy: CachePolicy = field(default_factory=CachePolicy)
    samples: dict = field(default_factory=dict)
    encounter_counts: dict = field(default_factory=dict)
    outcome_memo: dict = field(default_factory=dict)
    fresh_draws: int = 0

    @property
    def memoize(self) -> bool:
        return self.policy.tag == "cached"

    def get_samples(self, oracle: Oracle, arch: CellEncoding) -> np.ndarray:
        pol = self.policy
        seen = self.encounter_counts.get(arch, 0)
        self.encounter_counts[arch] = seen + 1
        if pol.tag == "on_the_fly":
            self.fresh_draws += pol.initial_draws
            return oracle.evaluate(arch, pol.initial_draws)
        stored = self.samples.get(arch)
        if stored is None:
            stored = oracle.evaluate(arch, pol.initial_draws)
            self.fresh_draws += pol.initial_draws
            self.samples[arch] = stored
        elif pol.tag == "hybrid":
            extra = oracle.evaluate(arch, pol.hybrid_increment)
            self.fresh_draws += pol.hybrid_increment
            stored = np.concatenate([stored, extra])
            self.samples[arch] = stored
        return stored


def get_samples(cache: EvalCache, oracle: Oracle, arch: CellEncoding) -> np.ndarray:
    return cache.get_samples(oracle, arch)


def dominance(a: np.ndarray, b: np.ndarray, threshold: float) -> int:
    """+1 if ``a`` is significantly stochastically greater, -1 if ``b`` is, else 0.

    For thresholds above 0.5 both one-sided tests can reject; the smaller
    p-value then decides, and an exact tie in p leaves it undecided.
    """
    p_a, p_b = one_sided_pvalues(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if p_a < threshold and p_a < p_b:
        return 1
    if p_b < threshold and p_b < p_a:
        return -1
    return 0


def _stat_max_by(n: int, beats: Callable[[int, int], bool]) -> int:
    best = 0
    for i in range(1, n):
        if beats(best, i):
            best = i
    return best


def _beats_fn(sets, threshold, tie_break, rng):
    def beats(inc: int, cand: int) -> bool:
        d = dominance(sets[cand], sets[inc], threshold)
        if d == 0 and tie_break == "random":
            return bool(rng.random() < 0.5)
        return d == 1
    return beats


def stat_max(sets: Sequence, threshold: float = 0.05, tie_break: str = "incumbent",
             rng: np.random.Generator | None = None) -> int:
    """Index of the statistical maximum of ``sets``.

    The first set starts as incumbent; each later set replaces it only if a
    one-sided test finds it stochastically greater with p below ``threshold``.
    Undecided comparisons keep the incumbent, so the result depends on input
    order. ``tie_break="random"`` instead flips a coin on undecided pairs.
    """
    if len(sets) == 0:
        raise ValueError("stat_max needs at least one sample set")
    if tie_break == "random" and rng is None:
        raise ValueError("random tie-breaking needs an rng")
    return _stat_max_by(len(sets), _beats_fn(sets, threshold, tie_break, rng))


def _topk_by(k: int, n: int, select: Callable[[list[int]], int]) -> list[int]:
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    remaining = list(range(n))
    out = []
    for _ in range(k):
        pos = select(remaining)
        out.append(remaining.pop(pos))
    return out


def stat_topk(k: int, sets: Sequence, threshold: float = 0.05, tie_break: str = "incumbent",
              rng: np.random.Generator | None = None) -> list[int]:
    """Repeated :func:`stat_max`, removing each winner; survivors keep their order."""
    if tie_break == "random" and rng is None:
        raise ValueError("random tie-breaking needs an rng")
    beats = _beats_fn(sets, threshold, tie_break, rng)
    return _topk_by(k, len(sets), lambda rem: _stat_max_by(
        len(rem), lambda i, j: beats(rem[i], rem[j])))


def _argmax_tied(values: np.ndarray, rng: np.random.Generator | None) -> int:
    top = np.flatnonzero(values == values.max())
    if len(top) == 1 or rng is None:
        return int(top[0])
    return int(top[rng.integers(len(top))])


def avg_max(sets: Sequence, rng: np.random.Generator | None = None) -> int:
    """Index of the largest sample mean; exact ties go to a uniform draw from ``rng``."""
    if len(sets) == 0:
        raise ValueError("avg_max needs at least one sample set")
    means = np.array([np.mean(s) for s in sets])
    return _argmax_tied(means, rng)


def avg_topk(k: int, sets: Sequence, rng: np.random.Generator | None = None) -> list[int]:
    means = np.array([np.mean(s) for s in sets])
    return _topk_by(k, len(sets), lambda rem: _argmax_tied(means[rem], rng))


class Selector:
    """Ranks population members for one run: evaluator + cache memo + tie rng."""

    def __init__(self, evaluator: EvaluatorKind, cache: EvalCache, oracle: Oracle,
                 rng: np.random.Generator, tie_break: str = "incumbent"):
        self.evaluator = evaluator
        self.cache = cache
        self.oracle = oracle
        self.rng = rng
        self.tie_break = tie_break
        self.tests_run = 0

    def _dominance(self, a: CellEncoding, sa, b: CellEncoding, sb) -> int:
        if a == b and self.cache.memoize:
            return 0
        if self.cache.memoize:
            key = frozenset((a, b))
            winner = self.cache.outcome_memo.get(key, ...)
            if winner is ...:
                self.tests_run += 1
                d = dominance(sa, sb, self.evaluator.threshold)
                winner = a if d == 1 else b if d == -1 else None
                self.cache.outcome_memo[key] = winner
            return 0 if winner is None else (1 if winner == a else -1)
        self.tests_run += 1
        return dominance(sa, sb, self.evaluator.threshold)

    def top(self, archs: Sequence[CellEncoding], samples: Sequence[np.ndarray], k: int = 1) -> list[int]:
        view = [self.oracle.present(s) for s in samples]
        if self.evaluator.tag == "averaging":
            return avg_topk(k, view, self.rng)

        def beats(inc: int, cand: int) -> bool:
            d = self._dominance(archs[cand], view[cand], archs[inc], view[inc])
            if d == 0 and self.tie_break == "random":
                return bool(self.rng.random() < 0.5)
            return d == 1

        return _topk_by(k, len(archs), lambda rem: _stat_max_by(
            len(rem), lambda i, j: beats(rem[i], rem[j])))


def compare_pair(evaluator: EvaluatorKind, cache: EvalCache, oracle: Oracle,
                 a: CellEncoding, b: CellEncoding, rng: np.random.Generator) -> str:
    """'a_preferred' or 'b_preferred'. Undecided statistical comparisons favour ``a``."""
    if a == b:
        raise ValueError("compare_pair needs two distinct architectures")
    sa = oracle.present(cache.get_samples(oracle, a))
    sb = oracle.present(cache.get_samples(oracle, b))
    if evaluator.tag == "averaging":
        return "a_preferred" if avg_max([sa, sb], rng) == 0 else "b_preferred"
    d = Selector(evaluator, cache, oracle, rng)._dominance(a, sa, b, sb)
    return "b_preferred" if d == -1 else "a_preferred"
