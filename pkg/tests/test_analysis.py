import math

import numpy as np
import pytest

from snas.analysis import (GridCell, cv_accuracy_correlation, cv_mean_correlation,
                           cv_ranker_search, execute_run, run_experiment, run_seed, summarize,
                           tau_null_sd, threshold_sweep, variation_metric)
from snas.oracle import BUILTIN_PROFILES, NoiseProfile, ReplayOracle, SyntheticOracle
from snas.search import SearchConfig, run_search
from snas.space import CellEncoding, SpaceSpec, canonical_string, sample_uniform
from snas.stats import minmax_normalize

from conftest import NOISELESS


def test_var_ss_noiseless_is_zero(tiny):
    rep = variation_metric(tiny, SyntheticOracle(tiny, NOISELESS), V=10)
    assert rep.var_ss == 0.0 and not rep.excluded and rep.n_archs == 27


def test_var_ss_constant_profile(tiny):
    rep = variation_metric(tiny.spec, SyntheticOracle(tiny, BUILTIN_PROFILES["constant"]), V=10**4)
    assert rep.var_ss == pytest.approx(0.2, rel=0.1)
    assert rep.batch_size == 64 and rep.evals == 10**4


def test_var_ss_conventional_and_errors(tiny):
    orc = SyntheticOracle(tiny, BUILTIN_PROFILES["constant"])
    paper = variation_metric(tiny, orc.fork(), V=50)
    conv = variation_metric(tiny, orc.fork(), V=50, convention="conventional")
    for a in paper.per_arch_cv:
        mean = paper.per_arch_mean[a]
        assert conv.per_arch_cv[a] == pytest.approx(math.sqrt(paper.per_arch_cv[a] * mean) / mean)
    with pytest.raises(ValueError):
        variation_metric(tiny, orc, V=1)


def test_degenerate_means_are_excluded():
    spec = SpaceSpec(2, ("a", "b"))
    orc = ReplayOracle({"a": [-1.0, 1.0], "b": [1.0, 3.0]})
    rep = variation_metric(spec, orc, V=2)
    assert rep.excluded == [CellEncoding((0,), spec)]
    assert rep.var_ss == 1.0 and rep.n_archs == 2


def test_correlation_signs_on_small_space(tiny):
    decl = SyntheticOracle(tiny, NoiseProfile(0.6, 0.05, 1.0, 0.0), seed=0)
    rep = variation_metric(tiny, decl, V=400)
    assert cv_accuracy_correlation(tiny, decl, tiny, report=rep) < 0
    assert cv_mean_correlation(tiny, decl, report=rep) < 0
    rise = SyntheticOracle(tiny, NoiseProfile(0.05, 0.6, 1.0, 0.0), seed=0)
    assert cv_accuracy_correlation(tiny, rise, tiny, V=400) > 0


def test_tau_null_sd():
    assert tau_null_sd(10) == pytest.approx(math.sqrt(2 * 25 / (9 * 10 * 9)))


def test_cv_ranker_matches_definition(tiny):
    orc = SyntheticOracle(tiny, BUILTIN_PROFILES["medium"], seed=1)
    cfg = SearchConfig("cv_ranker", N=20, seed=3)
    out = cv_ranker_search(tiny.spec, orc.fork(3), cfg, np.random.default_rng(3))
    replay, rng = orc.fork(3), np.random.default_rng(3)
    archs = [sample_uniform(tiny.spec, rng) for _ in range(20)]
    seen = {}
    for a in archs:
        seen.setdefault(a, replay.evaluate(a, 10))
    means = [np.mean(seen[a]) for a in archs]
    cvs = [np.var(seen[a], ddof=1) / np.mean(seen[a]) for a in archs]
    score = np.add(minmax_normalize(means), minmax_normalize(cvs))
    assert tiny[out.selected] == tiny[archs[int(np.argmax(score))]]


def test_cv_ranker_edge_cases(tiny):
    orc = SyntheticOracle(tiny, NOISELESS)
    one = run_search(tiny.spec, orc, SearchConfig("cv_ranker", N=1, seed=2))
    assert one.selected == sample_uniform(tiny.spec, np.random.default_rng(2))
    # noiseless: every CV is zero, so ranking falls back to the mean
    cv = run_search(tiny.spec, orc, SearchConfig("cv_ranker", N=40, seed=2))
    avg = run_search(tiny.spec, orc, SearchConfig("random", N=40, evaluator="averaging", seed=2))
    assert cv.selected == avg.selected


def _cell(tiny, alg="rea", ev="statistical", profile="high", **kw):
    orc = SyntheticOracle(tiny, BUILTIN_PROFILES[profile], seed=0)
    return GridCell("tiny", tiny, profile, orc, SearchConfig(alg, evaluator=ev, C=100, P=10, S=3, **kw))


def test_forced_identical_seeds_give_zero_std(tiny):
    res = run_experiment([_cell(tiny)], 2, seeds=[17, 17])[0]
    a, b = res.runs
    assert res.std == 0.0 and (a.selected_encoding, a.seed) == (b.selected_encoding, b.seed)


def test_run_seed_is_shared_across_evaluators(tiny):
    a, b = _cell(tiny, ev="statistical"), _cell(tiny, ev="averaging", cache="on_the_fly")
    assert run_seed(0, a, 3) == run_seed(0, b, 3)
    assert run_seed(0, a, 3) != run_seed(1, a, 3) != run_seed(0, a, 4)
    assert run_seed(0, a, 3) < 2**63


def test_run_experiment_records_and_summary(tiny):
    grid = [_cell(tiny, ev="averaging"), _cell(tiny, ev="statistical")]
    res = run_experiment(grid, [3, 4], base_seed=5)
    assert [len(r.runs) for r in res] == [3, 4]
    rec = res[0].runs[1]
    assert rec.run == 1 and rec.accuracy == tiny[
        next(a for a in tiny.encodings() if canonical_string(a) == rec.selected_encoding)]
    (row,) = summarize(res)
    assert row.mean_avg == pytest.approx(np.mean(res[0].accuracies))
    assert row.std_stat == pytest.approx(np.std(res[1].accuracies, ddof=1))
    assert 0.0 <= row.p_value <= 1.0
    (half,) = summarize(res[:1])
    assert half.mean_stat is None and half.p_value is None
    with pytest.raises(ValueError):
        run_experiment(grid, 1)
    with pytest.raises(ValueError):
        run_experiment(grid, [2])


def test_parallel_matches_serial(tiny):
    grid = [_cell(tiny, alg="free_rea"), _cell(tiny, alg="random", N=10)]
    serial = run_experiment(grid, 3, base_seed=2)
    parallel = run_experiment(grid, 3, base_seed=2, jobs=2)
    assert [r.runs for r in serial] == [r.runs for r in parallel]


def test_failed_run_names_cell(tiny):
    bad = GridCell("tiny", tiny, "replay", ReplayOracle({}), SearchConfig("random", N=2))
    with pytest.raises(RuntimeError, match="run 0"):
        execute_run(bad, 0, 0)


def test_threshold_sweep(tiny):
    cell = _cell(tiny, alg="random", N=20)
    rows = threshold_sweep(cell, [0.5, 0.05, 0.001], repeats=4)
    assert [r.threshold for r in rows] == [0.001, 0.05, 0.5]
    assert rows[1].relative_accuracy == 0.0 and all(r.runs == 4 for r in rows)
    only = threshold_sweep(cell, [0.3], repeats=4)
    base = run_experiment([GridCell(cell.space, tiny, cell.oracle_profile, cell.oracle,
                                    cell.config.with_(threshold=0.05))], 4)[0].mean
    assert only[0].relative_accuracy == pytest.approx(only[0].mean_accuracy - base)
    with pytest.raises(ValueError):
        threshold_sweep(cell, [], 4)
    with pytest.raises(ValueError):
        threshold_sweep(cell, [0.0, 0.5], 4)
