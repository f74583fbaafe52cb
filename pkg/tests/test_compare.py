import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snas.compare import (CachePolicy, EvalCache, EvaluatorKind, Selector, avg_max, avg_topk,
                          compare_pair, dominance, get_samples, stat_max, stat_topk)
from snas.oracle import BUILTIN_PROFILES, NoiseProfile, ReplayOracle, SyntheticOracle
from snas.space import CellEncoding, SpaceSpec
from snas.stats import mann_whitney_u

A = list(range(10, 20))
B = list(range(10))

sets_strategy = st.lists(st.lists(st.integers(0, 30), min_size=3, max_size=8),
                         min_size=1, max_size=6)


def test_decisive_dominance_wins_from_both_orders():
    assert mann_whitney_u(A, B, "first_greater").p_value == pytest.approx(1 / math.comb(20, 10))
    assert stat_max([A, B]) == 0
    assert stat_max([B, A]) == 1


def test_identical_sets_keep_first():
    assert stat_max([A, list(A)]) == 0
    assert stat_max([list(A), A]) == 0
    assert stat_max([A]) == 0
    with pytest.raises(ValueError):
        stat_max([])


def test_stat_topk():
    a = list(range(20, 30))
    b = list(range(10, 20))
    c = list(range(10))
    for order in ([a, b, c], [c, b, a], [b, c, a]):
        ranked = [order[i] for i in stat_topk(3, order)]
        assert ranked == [a, b, c]
    assert stat_topk(1, [c, a]) == [stat_max([c, a])]
    with pytest.raises(ValueError):
        stat_topk(3, [a, b])


@settings(max_examples=60, deadline=None)
@given(sets_strategy, st.floats(0.01, 0.5))
def test_topk_full_is_permutation_and_k1_is_max(sets, t):
    assert sorted(stat_topk(len(sets), sets, t)) == list(range(len(sets)))
    assert stat_topk(1, sets, t)[0] == stat_max(sets, t)


@settings(max_examples=60, deadline=None)
@given(sets_strategy)
def test_stat_max_invariant_under_increasing_transform(sets):
    base = stat_max(sets)
    assert stat_max([[3 * v + 7 for v in s] for s in sets]) == base
    assert stat_max([np.exp(np.array(s) / 10.0) for s in sets]) == base


@settings(max_examples=60, deadline=None)
@given(sets_strategy)
def test_threshold_limits(sets):
    # near 0 no test can reject
    assert stat_max(sets, 1e-12) == 0
    # near 1 the candidate wins whenever its point estimate edges the incumbent
    inc = 0
    for i in range(1, len(sets)):
        r = mann_whitney_u(sets[i], sets[inc])
        if r.u_first > r.u_second:
            inc = i
    assert stat_max(sets, 1 - 1e-12) == inc


def test_dominance_directions():
    assert dominance(np.array(A, float), np.array(B, float), 0.05) == 1
    assert dominance(np.array(B, float), np.array(A, float), 0.05) == -1
    assert dominance(np.array(A, float), np.array(A, float), 0.05) == 0


def test_random_tie_break():
    rng = np.random.default_rng(0)
    picks = [stat_max([A, list(A)], tie_break="random", rng=rng) for _ in range(400)]
    assert 100 < sum(picks) < 300
    with pytest.raises(ValueError):
        stat_max([A, A], tie_break="random")


def test_avg_examples():
    sets = [[3.0], [5.0], [4.0]]
    assert avg_max(sets) == 1
    assert avg_topk(2, sets) == [1, 2]
    with pytest.raises(ValueError):
        avg_max([])


def test_avg_ties_are_uniform():
    rng = np.random.default_rng(1)
    n, k = 10**4, 4
    counts = np.bincount([avg_max([[1.0, 3.0]] * k, rng) for _ in range(n)], minlength=k)
    sd = math.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) < 4 * sd)


# ---- cache policies -----------------------------------------------------------

@pytest.fixture
def noisy(tiny):
    return SyntheticOracle(tiny, BUILTIN_PROFILES["high"], seed=1)


def test_cached_policy(tiny, noisy):
    cache = EvalCache(CachePolicy("cached", 10))
    arch = tiny.encodings()[3]
    first = get_samples(cache, noisy, arch)
    again = get_samples(cache, noisy, arch)
    assert first is again and len(first) == 10
    assert cache.fresh_draws == 10 and cache.encounter_counts[arch] == 2


def test_hybrid_policy(tiny, noisy):
    cache = EvalCache(CachePolicy("hybrid", 10, 3))
    arch = tiny.encodings()[3]
    sizes = [len(get_samples(cache, noisy, arch)) for _ in range(3)]
    assert sizes == [10, 13, 16] and cache.fresh_draws == 16
    assert len(cache.samples[arch]) == 16


def test_on_the_fly_policy(tiny, noisy):
    cache = EvalCache(CachePolicy("on_the_fly", 10))
    arch = tiny.encodings()[3]
    a, b = get_samples(cache, noisy, arch), get_samples(cache, noisy, arch)
    assert not np.array_equal(a, b)
    assert cache.fresh_draws == 20 and not cache.samples


def test_policy_validation():
    with pytest.raises(ValueError):
        CachePolicy("sometimes")
    with pytest.raises(ValueError):
        CachePolicy("cached", 0)
    with pytest.raises(ValueError):
        EvaluatorKind("statistical", 1.0)
    with pytest.raises(ValueError):
        EvaluatorKind("median")


def _pair():
    spec = SpaceSpec(2, ("a", "b"))
    return spec, CellEncoding((0,), spec), CellEncoding((1,), spec)


def test_compare_pair_decisive_either_order():
    _, a, b = _pair()
    orc = ReplayOracle({"a": list(range(10)), "b": list(range(10, 20))})
    ev = EvaluatorKind("statistical")
    rng = np.random.default_rng(0)
    assert compare_pair(ev, EvalCache(), orc, a, b, rng) == "b_preferred"
    assert compare_pair(ev, EvalCache(), orc.fork(), b, a, rng) == "a_preferred"
    assert compare_pair(EvaluatorKind("averaging"), EvalCache(), orc.fork(), a, b, rng) == "b_preferred"
    with pytest.raises(ValueError):
        compare_pair(ev, EvalCache(), orc, a, a, rng)


def test_compare_pair_undecided_prefers_first():
    _, a, b = _pair()
    orc = ReplayOracle({"a": [1.0, 2.0, 3.0], "b": [1.5, 2.5, 3.5]})
    ev = EvaluatorKind("statistical")
    rng = np.random.default_rng(0)
    assert compare_pair(ev, EvalCache(CachePolicy("cached", 3)), orc, a, b, rng) == "a_preferred"
    assert compare_pair(ev, EvalCache(CachePolicy("cached", 3)), orc.fork(), b, a, rng) == "a_preferred"


def test_memo_replays_consistently_without_draws(tiny, noisy):
    ev = EvaluatorKind("statistical")
    cache = EvalCache(CachePolicy("cached", 10))
    rng = np.random.default_rng(0)
    encs = tiny.encodings()
    for i in range(len(encs)):
        for j in range(i + 1, len(encs)):
            first = compare_pair(ev, cache, noisy, encs[i], encs[j], rng)
            draws = cache.fresh_draws
            swapped = compare_pair(ev, cache, noisy, encs[j], encs[i], rng)
            assert cache.fresh_draws == draws
            winner = {"a_preferred": encs[i], "b_preferred": encs[j]}[first]
            key = frozenset((encs[i], encs[j]))
            stored = cache.outcome_memo[key]
            assert stored in (None, winner)
            if stored is not None:
                assert {"a_preferred": encs[j], "b_preferred": encs[i]}[swapped] == winner
    assert len(cache.outcome_memo) == len(encs) * (len(encs) - 1) // 2


def test_memo_disabled_off_cached(tiny, noisy):
    for tag in ("on_the_fly", "hybrid"):
        cache = EvalCache(CachePolicy(tag, 10))
        sel = Selector(EvaluatorKind("statistical"), cache, noisy, np.random.default_rng(0))
        encs = tiny.encodings()[:5]
        sel.top(encs, [get_samples(cache, noisy, e) for e in encs])
        assert not cache.outcome_memo


def test_on_the_fly_decisions_can_flip(tiny):
    orc = SyntheticOracle(tiny, NoiseProfile(4.0, 4.0, 1.0, 0.0, family="lognormal"), seed=0)
    ev = EvaluatorKind("statistical", 0.25)
    rng = np.random.default_rng(0)
    encs = sorted(tiny.accuracy, key=tiny.accuracy.get)
    a, b = encs[12], encs[14]
    cache = EvalCache(CachePolicy("on_the_fly", 10))
    outcomes = {compare_pair(ev, cache, orc, a, b, rng) for _ in range(200)}
    assert outcomes == {"a_preferred", "b_preferred"}


def test_selector_averaging_matches_avg_topk(tiny, noisy):
    cache = EvalCache()
    encs = tiny.encodings()
    samples = [get_samples(cache, noisy, e) for e in encs]
    sel = Selector(EvaluatorKind("averaging"), cache, noisy, np.random.default_rng(0))
    assert sel.top(encs, samples, 3) == avg_topk(3, samples)


def test_selector_statistical_matches_stat_topk(tiny, noisy):
    cache = EvalCache()
    encs = tiny.encodings()
    samples = [get_samples(cache, noisy, e) for e in encs]
    sel = Selector(EvaluatorKind("statistical"), cache, noisy, np.random.default_rng(0))
    assert sel.top(encs, samples, 4) == stat_topk(4, samples)
    tests = sel.tests_run
    assert sel.top(encs, samples, 4) == stat_topk(4, samples)
    assert sel.tests_run == tests  # second pass fully memoized
