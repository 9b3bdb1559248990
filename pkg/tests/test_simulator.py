import math

import numpy as np
import pytest
from scipy import stats

from khop.exceptions import TuningError, UnresolvableExponentError
from khop.schemes import HopNetworkSpec
from khop.simulator import (
    ErrorEstimate,
    ExperimentSpec,
    clopper_pearson,
    collect,
    estimate,
    fit_exponent,
    run_trials,
    strong_converse_sweep,
    tune_center,
)
from khop.sources import bsc, dsbs_chain

NET = HopNetworkSpec(dsbs_chain([0.1, 0.1]), (0.5, 0.5))
CH = [bsc(0.12), bsc(0.12)]


def small_spec(**kw):
    base = dict(network=NET, channels=CH, blocklengths=(6, 8), trials=3000, seed=3, backend="explicit")
    base.update(kw)
    return ExperimentSpec(**base)


class TestClopperPearson:
    def test_edges(self):
        assert clopper_pearson(0, 10)[0] == 0.0
        assert clopper_pearson(10, 10)[1] == 1.0

    def test_known_value(self):
        lo, hi = clopper_pearson(5, 20)
        assert lo == pytest.approx(stats.beta.ppf(0.025, 5, 16))
        assert hi == pytest.approx(stats.beta.ppf(0.975, 6, 15))
        assert lo < 0.25 < hi

    def test_coverage(self):
        rng = np.random.default_rng(1)
        p, T = 0.07, 400
        hits = 0
        for x in rng.binomial(T, p, size=500):
            lo, hi = clopper_pearson(int(x), T)
            hits += lo <= p <= hi
        assert hits / 500 >= 0.93


def test_estimate_counts_errors():
    e = estimate(2, 10, 0, np.array([0, 1, 0, 1, 1]))
    assert (e.errors, e.trials, e.rate) == (3, 5, 0.6)
    assert e.alpha_hat == 0.6 and e.beta_hat is None
    e = estimate(1, 10, 1, np.array([0, 1, 1, 1]))
    assert e.errors == 1 and e.beta_hat == 0.25


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            small_spec(blocklengths=(8, 6))
        with pytest.raises(ValueError):
            small_spec(channels=CH[:1])
        with pytest.raises(ValueError):
            small_spec(epsilon_sweep=(1.0,))
        with pytest.raises(ValueError):
            small_spec(trials=0)

    def test_epsilons_sorted(self):
        assert small_spec(epsilon_sweep=(0.4, 0.0, 0.1)).epsilon_sweep == (0.0, 0.1, 0.4)


class TestSeeding:
    def test_repeatable(self):
        a = run_trials(small_spec(), 1)
        b = run_trials(small_spec(), 1)
        assert [e.errors for e in a] == [e.errors for e in b]

    def test_chunking_invariant(self, monkeypatch):
        import khop.simulator as sim

        spec = small_spec(trials=2500)
        r1 = collect(spec, 6, 0)
        monkeypatch.setattr(sim, "CHUNK", 500)
        r2 = collect(spec, 6, 0)
        # different chunking draws different streams, but each chunk stream is fixed
        assert r1.stats.slack.shape == r2.stats.slack.shape
        monkeypatch.setattr(sim, "CHUNK", 10_000)
        r3 = collect(spec, 6, 0)
        np.testing.assert_array_equal(r1.stats.slack, r3.stats.slack)

    def test_seed_changes_results(self):
        a = collect(small_spec(seed=1), 6, 1)
        b = collect(small_spec(seed=2), 6, 1)
        assert not np.array_equal(a.stats.slack, b.stats.slack)


def test_run_trials_layout():
    est = run_trials(small_spec(), 0)
    assert [(e.k, e.n) for e in est] == [(1, 6), (1, 8), (2, 6), (2, 8)]
    assert all(e.hypothesis == 0 and e.trials == 3000 for e in est)
    with pytest.raises(ValueError):
        run_trials(small_spec(), 2)


def _geom(ns, rate, T=10**6, k=1):
    return [ErrorEstimate(k, n, 1, T, int(T * 2.0 ** (-rate * n)), *clopper_pearson(int(T * 2.0 ** (-rate * n)), T))
            for n in ns]


class TestFit:
    def test_recovers_slope(self):
        fit = fit_exponent(_geom([10, 20, 30, 40, 50], 0.2), 1)
        assert fit.slope == pytest.approx(0.2, abs=2e-3)
        assert fit.used == [20, 30, 40, 50]
        assert fit.slope_ci[0] <= fit.slope <= fit.slope_ci[1]

    def test_burn_in_and_cap(self):
        ests = _geom([10, 20, 30, 40, 50, 90], 0.2)  # 2^-18 * 1e6 is about 3 errors: wide interval
        fit = fit_exponent(ests, 1, burn_in=0)
        assert fit.used == [10, 20, 30, 40, 50]
        assert len(fit.points) == 6

    def test_unresolvable(self):
        with pytest.raises(UnresolvableExponentError, match="usable"):
            fit_exponent(_geom([10, 20, 30], 0.2), 1)
        with pytest.raises(UnresolvableExponentError):
            fit_exponent(_geom([10, 20, 30, 40], 0.2), 2)


class TestTuning:
    def test_hits_target(self):
        spec = small_spec(trials=4000)
        run = collect(spec, 8, 0)
        base = [run.mu, run.mu]
        for k in (0, 1):
            for eps in (0.1, 0.3):
                c, gamma, a = tune_center(run, k, eps, base)
                assert abs(a - eps) <= 0.02
                assert 0 <= gamma <= 1 and c > 0

    def test_unreachable_target(self):
        from khop.schemes import TrialStats
        from khop.simulator import _Run

        T = 100
        ok = np.ones((T, 1), dtype=bool)
        ok[:30] = False  # encoder failures: type-I error at least 0.3 whatever the threshold
        st = TrialStats(ok, np.where(ok, 0.1, np.inf), ())
        run = _Run(st, np.random.default_rng(0).random((T, 1)), 0.5)
        with pytest.raises(TuningError, match="vacuous"):
            tune_center(run, 0, 0.1, [0.5])
        c, gamma, a = tune_center(run, 0, 0.3, [0.5])
        assert a == pytest.approx(0.3)


def test_sweep_rows():
    spec = small_spec(blocklengths=(4, 6, 8, 10), trials=4000, epsilon_sweep=(0.0, 0.3), burn_in=0, ci_cap=10.0)
    rows = strong_converse_sweep(spec)
    assert [(r.k, r.epsilon) for r in rows] == [(1, 0.0), (2, 0.0), (1, 0.3), (2, 0.3)]
    for r in rows:
        assert set(r.alpha_hat) == {4, 6, 8, 10}
        if r.epsilon > 0:
            assert all(abs(a - 0.3) <= 0.02 for a in r.alpha_hat.values())
    with pytest.raises(ValueError):
        strong_converse_sweep(small_spec())
