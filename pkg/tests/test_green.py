import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from eigenmsa.errors import InvalidArgument
from eigenmsa.green import (
    geometric_resolvent_check,
    is_regular,
    localizing_implies_regular_experiment,
    regular_implies_localizing_experiment,
    wegner_bound,
    wegner_empirical,
)
from eigenmsa.lattice import Box, box_sites
from eigenmsa.model import AndersonModel, Potential, SingleSiteDistribution, hamiltonian, sample_potential
from eigenmsa.spectral import eigensystem

UNIT = SingleSiteDistribution.uniform(0, 1)


def random_H(d, side, eps, seed=0, trial=0):
    r = box_sites(Box.centered(d, side))
    return hamiltonian(r, eps, sample_potential(r, UNIT, seed, trial))


class TestRegularity:
    def test_far_energy_eps_zero(self):
        H = random_H(1, 12, 0.0)
        for m in (0.1, 10.0, 1e6):
            rep = is_regular(H, 3.0, m)
            assert rep.is_regular and rep.margin == -math.inf

    def test_eigenvalue_is_not_regular(self):
        H = random_H(1, 12, 0.1)
        es = eigensystem(H)
        rep = is_regular(H, es.values[4], 0.1, es)
        assert not rep.is_regular and rep.near_singular

    def test_small_boxes_test_every_pair(self):
        H = random_H(1, 8, 0.5)
        rep = is_regular(H, 0.37, 0.0)
        G = np.linalg.inv(H.matrix - 0.37 * np.eye(H.n))
        off = np.abs(G - np.diag(np.diag(G))).max()
        assert math.isclose(rep.worst_ratio, off, rel_tol=1e-9)

    @given(st.integers(1, 2), st.integers(2, 8), st.floats(0, 1), st.floats(-1, 2), st.integers(0, 100))
    def test_resolvent_norm(self, d, side, eps, E, trial):
        H = random_H(d, side, eps, 2, trial)
        es = eigensystem(H)
        assume(np.abs(es.values - E).min() > 1e-8)
        rep = is_regular(H, E, 1.0, es)
        assert math.isclose(rep.resolvent_norm, np.linalg.norm(es.green(E), 2), rel_tol=1e-9)

    def test_strong_disorder_is_regular(self):
        H = random_H(1, 40, 1e-4, 3)
        rep = is_regular(H, -0.5, 1.0)
        assert rep.is_regular


class TestResolventIdentity:
    @given(st.integers(0, 10**5), st.integers(0, 10))
    def test_random(self, trial, j):
        H = random_H(1, 10, 0.6, 4, trial)
        es = eigensystem(H)
        chk = geometric_resolvent_check(H, Box((Fraction(0),), 4), es.vectors[:, j], es.values[j])
        assert chk.ok and chk.boundary_edges == 2

    def test_d2(self):
        H = random_H(2, 8, 0.4, 1)
        es = eigensystem(H)
        for j in range(0, es.n, 9):
            assert geometric_resolvent_check(H, Box((Fraction(1, 2), 0), 3), es.vectors[:, j], es.values[j]).ok

    def test_equal_boxes_rejected(self):
        H = random_H(1, 10, 0.6)
        es = eigensystem(H)
        with pytest.raises(InvalidArgument):
            geometric_resolvent_check(H, Box.centered(1, 10), es.vectors[:, 0], es.values[0])

    def test_decoupled(self):
        r = box_sites(Box.centered(1, 10))
        H = hamiltonian(r, 0.0, Potential(r, np.linspace(0, 1, len(r))))
        es = eigensystem(H)
        j = int(np.argmax(np.abs(es.vectors[r.row((5,))])))
        chk = geometric_resolvent_check(H, Box.centered(1, 4), es.vectors[:, j], es.values[j])
        assert chk.ok and chk.residual == 0


class TestWegner:
    @pytest.mark.parametrize("E", [0.5, 0.02])
    def test_closed_form_eps_zero(self, E):
        L, beta = 2, 0.8
        delta = math.exp(-(L**beta))
        covered = min(1, E + delta) - max(0, E - delta)
        exact = (1 - covered) ** 3
        est = wegner_empirical(AndersonModel(1, 0.0, UNIT), L, E, beta, 20000, 0)
        assert abs(est.estimate - exact) <= 4 * math.sqrt(exact * (1 - exact) / 20000)

    def test_vacuous_bound(self):
        model = AndersonModel(1, 0.0, UNIT)
        assert wegner_bound(model, 2, 0.8) < 0
        assert wegner_empirical(model, 2, 0.5, 0.8, 50, 0).verdict == "consistent"

    def test_reproducible(self):
        model = AndersonModel(1, 1e-3, UNIT)
        assert wegner_empirical(model, 10, 0.5, 0.8, 300, 4) == wegner_empirical(model, 10, 0.5, 0.8, 300, 4, workers=2)


class TestCross:
    def test_eps_zero_regular(self):
        rep = localizing_implies_regular_experiment(AndersonModel(1, 0.0, UNIT), 20, 5.0, 2.5, 0.8, 30, 0)
        assert rep.counterexamples == () and rep.regular_count == rep.hypothesis_count

    def test_initial_regime(self):
        L, beta = 40, 0.8
        eps = math.exp(-(L**beta)) / 8
        rep = localizing_implies_regular_experiment(AndersonModel(1, eps, UNIT), L, None, None, beta, 30, 1)
        assert rep.hypothesis_count > 0 and rep.pass_fraction == 1.0
        assert rep.probes == 30 * 5

    def test_labeling_eps_zero(self):
        rep = regular_implies_localizing_experiment(AndersonModel(1, 0.0, UNIT), 6, 2.0, 1.0, trials=20)
        assert rep.hypothesis_count + rep.level_spacing_failures <= 20
        assert rep.labeling_fraction == 1.0 and rep.localized_fraction == 1.0

    def test_labeling_strong_disorder(self):
        rep = regular_implies_localizing_experiment(AndersonModel(1, 1e-6, UNIT), 6, 2.0, 1.0, trials=30, master_seed=2)
        assert rep.L == 36
        assert rep.labeling_fraction >= 0.9
