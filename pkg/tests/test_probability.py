import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import binomtest

from eigenmsa.errors import InvalidArgument
from eigenmsa.lattice import Region
from eigenmsa.model import AndersonModel, SingleSiteDistribution
from eigenmsa.probability import (
    McEstimate,
    compare_to_bound,
    klm_bound,
    klm_event_probability,
    klm_windows,
    level_spacing_bound,
    localizing_bound,
    mc_level_spacing_probability,
    mc_localizing_probability,
    minami_empirical,
    msa_scan,
    run_chunked,
    scale_sequence,
    wilson_interval,
)
from eigenmsa.certify import validate_scale_params

UNIT = SingleSiteDistribution.uniform(0, 1)


def sites(n):
    return Region([(i,) for i in range(n)])


class TestWilson:
    @given(st.integers(1, 5000), st.data())
    def test_matches_scipy(self, n, data):
        k = data.draw(st.integers(0, n))
        lo, hi = wilson_interval(k, n)
        ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
        assert math.isclose(lo, ci.low, abs_tol=1e-9)
        assert math.isclose(hi, ci.high, abs_tol=1e-9)

    def test_coverage(self):
        rng = np.random.default_rng(0)
        p, n = 0.3, 200
        hits = 0
        for _ in range(500):
            lo, hi = wilson_interval(int((rng.random(n) < p).sum()), n)
            hits += lo <= p <= hi
        assert hits / 500 >= 0.9

    def test_single_trial(self):
        est = McEstimate.from_counts(1, 1, 0.5)
        assert est.wilson_low < 0.25 and est.wilson_high == 1.0
        assert est.verdict == "inconclusive"

    def test_verdicts(self):
        assert compare_to_bound(-3.0, 0.1, 0.2) == "consistent"
        assert compare_to_bound(0.5, 0.6, 0.7) == "consistent"
        assert compare_to_bound(0.9, 0.6, 0.7) == "bound-violated"
        assert compare_to_bound(0.65, 0.6, 0.7) == "inconclusive"
        assert compare_to_bound(None, 0.6, 0.7) == "inconclusive"


class _Square:
    def __call__(self, start, stop):
        return np.arange(start, stop) ** 2


class TestChunking:
    def test_order_independent_of_workers(self):
        a = np.concatenate(run_chunked(_Square(), 1000, workers=1, chunk=64))
        b = np.concatenate(run_chunked(_Square(), 1000, workers=3, chunk=64))
        assert np.array_equal(a, b) and np.array_equal(a, np.arange(1000) ** 2)


class TestLocalizing:
    def test_eps_zero(self):
        # delta eigenvectors always match; only level spacing can fail
        model = AndersonModel(1, 0.0, UNIT)
        est = mc_localizing_probability(model, 20, 5.0, trials=400, master_seed=1, beta=0.8, tau=0.5)
        assert est.details["matching_failures"] == 0
        assert est.estimate >= 0.97 and est.wilson_high >= est.bound

    def test_reproducible_and_worker_independent(self):
        model = AndersonModel(1, 1e-4, UNIT)
        a = mc_localizing_probability(model, 12, 2.0, trials=300, master_seed=3, beta=0.8, tau=0.5)
        b = mc_localizing_probability(model, 12, 2.0, trials=300, master_seed=3, beta=0.8, tau=0.5, workers=2)
        assert a == b and a.details == b.details

    def test_bound_formula(self):
        L, beta = 20, 0.8
        eps = math.exp(-(L**beta)) / 8
        b = localizing_bound(AndersonModel(1, eps, UNIT), L, beta)
        assert math.isclose(1 - b, 0.5 * 441 * (8 * eps + 2 * math.exp(-(L**beta))))

    def test_rejects_zero_trials(self):
        with pytest.raises(InvalidArgument):
            mc_localizing_probability(AndersonModel(1, 0, UNIT), 4, 1.0, trials=0, beta=0.8, tau=0.5)


class TestLevelSpacing:
    def test_single_site(self):
        est = mc_level_spacing_probability(AndersonModel(1, 0.0, UNIT), sites(1), 20, 0.8, 50, 0)
        assert est.estimate == 1.0

    def test_two_atoms_exact(self):
        # two sites, equal draws with probability 1/2
        model = AndersonModel(1, 0.0, SingleSiteDistribution.discrete([0, 1]))
        est = mc_level_spacing_probability(model, sites(2), 20, 0.8, 4000, 0)
        assert abs(est.estimate - 0.5) < 3 * math.sqrt(0.25 / 4000)
        assert est.bound is None and est.verdict == "inconclusive"

    def test_uniform_bound(self):
        model = AndersonModel(1, 0.0, UNIT)
        est = mc_level_spacing_probability(model, sites(10), 20, 0.8, 2000, 1)
        expected = 1 - 2 * 1 * (1 + 0 + 1) * math.exp(-(20**0.8)) * 100
        assert math.isclose(est.bound, expected)
        assert est.wilson_high >= est.bound
        assert level_spacing_bound(model, 10, 20, 0.8) == est.bound


class TestKlm:
    @given(st.floats(-5, 5), st.floats(0, 10), st.floats(1e-3, 0.5))
    def test_window_count(self, lo, length, eta):
        hi = lo + length
        w = klm_windows(lo, hi, eta)
        assert w.size == 2 * math.ceil((hi - lo) / (2 * eta))

    def test_windows_catch_short_intervals(self):
        lo, hi, eta = 0.0, 1.0, 0.1
        starts = klm_windows(lo, hi, eta)
        for a in np.linspace(lo, hi - eta, 37):
            assert ((starts <= a) & (a + eta <= starts + 2 * eta)).any()

    def test_single_site(self):
        est = klm_event_probability(AndersonModel(1, 0.0, UNIT), sites(1), (0, 1), 0.01, 100, 0)
        assert est.estimate == 1.0

    def test_small_eta(self):
        est = klm_event_probability(AndersonModel(1, 0.0, UNIT), sites(3), (0, 1), 1e-6, 300, 0)
        assert est.estimate == 1.0

    def test_bounds(self):
        model = AndersonModel(1, 0.0, UNIT)
        assert klm_bound(model, 5, 1.0, 0.01) == pytest.approx(0.0)
        assert klm_bound(model, 5, 1.0, 0.001) == pytest.approx(0.9)
        est = klm_event_probability(model, sites(5), (0, 1), 0.001, 2000, 0)
        assert est.wilson_high >= 0.9


class TestMinami:
    def test_empty_interval(self):
        rep = minami_empirical(AndersonModel(1, 0.0, UNIT), sites(3), (0.5, 0.4), 50, 0)
        assert rep.moment == 0

    def test_at_most_one(self):
        rep = minami_empirical(AndersonModel(1, 0.0, UNIT), sites(1), (0, 1), 50, 0)
        assert rep.moment == 0 and rep.standard_error == 0

    def test_two_site_exact(self):
        rep = minami_empirical(AndersonModel(1, 0.0, UNIT), sites(2), (0, 0.1), 20000, 5)
        # 4 sigma keeps the false alarm rate near 1e-4
        assert abs(rep.moment - 0.02) <= 4 * rep.standard_error
        assert rep.bound == pytest.approx(0.04) and rep.within_bound


class TestScales:
    def test_examples(self):
        seq = scale_sequence(10, 1.5, 2)
        assert seq.scales[0] == 10
        assert seq.scales[1] == pytest.approx(10**1.5)
        assert seq.scales[2] == pytest.approx(10**2.25)

    def test_gamma_one(self):
        with pytest.raises(InvalidArgument):
            scale_sequence(10, 1.0, 2)

    def test_overflow_truncates(self):
        seq = scale_sequence(10, 3.0, 20)
        assert seq.truncated and all(math.isfinite(s) for s in seq.scales)

    def test_scan_single_scale(self):
        params = validate_scale_params(0.1, 0.3, 0.4, 0.9, 1.3)
        model = AndersonModel(1, 1e-4, UNIT)
        rows = msa_scan(model, params, 12, 0, 4.0, 100, 2)
        direct = mc_localizing_probability(model, 12, 2.0, params, 100, 2)
        assert len(rows) == 1 and rows[0].estimate == direct

    def test_scan_schema(self):
        params = validate_scale_params(0.1, 0.3, 0.4, 0.9, 1.3)
        rows = msa_scan(AndersonModel(1, 1e-5, UNIT), params, 20, 2, 4.0, 20, 0)
        assert [r.k for r in rows] == [0, 1, 2]
        assert [r.L for r in rows] == sorted(r.L for r in rows)

    def test_scan_skips_large_boxes(self):
        params = validate_scale_params(0.1, 0.3, 0.4, 0.9, 1.3)
        rows = msa_scan(AndersonModel(2, 1e-5, UNIT), params, 20, 2, 4.0, 5, 0, site_cap=500)
        assert [r.skipped for r in rows] == [False, True, True]
        assert rows[1].meets_zeta is None
