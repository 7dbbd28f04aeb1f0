import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eigenmsa.certify import (
    BipartiteGraph,
    certify_m_localizing,
    hall_condition_via_projection,
    initial_mass,
    initial_step_certify,
    is_level_spacing,
    is_localized,
    localization_graph,
    localization_is_vacuous,
    perfect_matching,
    potential_separation_ok,
    reference_decay_rates,
    validate_scale_params,
)
from eigenmsa.errors import InvalidArgument, PreconditionViolated, ScaleParamError
from eigenmsa.lattice import Box, box_sites, floor_power
from eigenmsa.model import Potential, SingleSiteDistribution, hamiltonian, sample_potential
from eigenmsa.spectral import eigensystem

UNIT = SingleSiteDistribution.uniform(0, 1)


def hall_holds(n, adj):
    for r in range(1, n + 1):
        for U in itertools.combinations(range(n), r):
            if len(set().union(*(adj[u] for u in U))) < len(U):
                return False
    return True


def random_graph(rng, n, p):
    mask = rng.random((n, n)) < p
    return BipartiteGraph.from_dense(mask)


class TestScaleParams:
    def test_valid(self):
        p = validate_scale_params(0.1, 0.3, 0.4, 0.9, 1.5)
        assert math.isclose(p.zeta_tilde, 0.35) and math.isclose(p.tau_tilde, 0.95)

    def test_gamma_too_large(self):
        with pytest.raises(ScaleParamError) as exc:
            validate_scale_params(0.1, 0.3, 0.4, 0.9, 2.0)
        assert "gamma < sqrt(zeta/xi)" in exc.value.violations

    def test_tau_too_small(self):
        with pytest.raises(ScaleParamError) as exc:
            validate_scale_params(0.1, 0.3, 0.4, 0.5, 1.5)
        assert any("tau" in v for v in exc.value.violations)

    @given(
        st.floats(0.01, 0.5), st.floats(0.01, 0.9), st.floats(0.01, 0.99), st.floats(0.01, 0.999), st.floats(1.001, 3)
    )
    def test_valid_params_satisfy_the_chain(self, xi, zeta, beta, tau, gamma):
        try:
            p = validate_scale_params(xi, zeta, beta, tau, gamma)
        except ScaleParamError:
            return
        assert p.xi * p.gamma**2 < p.zeta < p.beta < p.tau / p.gamma < 1 / p.gamma < p.tau < 1
        assert 1 < (1 - beta) / (tau - beta) < gamma < tau / beta

    def test_at_scale(self):
        p = validate_scale_params(0.1, 0.3, 0.4, 0.9, 1.5)
        s = p.at_scale(1000)
        assert math.isclose(s["ell"], 100) and s["L_tau"] == floor_power(1000, 0.9)


class TestLevelSpacing:
    def test_examples(self):
        assert is_level_spacing([0.0, 1.0], 10, 0.5)
        assert not is_level_spacing([0.0, 0.0], 10, 0.5)
        assert is_level_spacing([0.3], 10, 0.5)

    def test_gap_threshold(self):
        g = math.exp(-(20**0.8))
        assert is_level_spacing([0.0, 1.01 * g], 20, 0.8)
        assert not is_level_spacing([0.0, 0.99 * g], 20, 0.8)


class TestLocalized:
    def test_delta(self):
        region = box_sites(Box.centered(1, 30))
        v = np.zeros(len(region))
        v[region.row((3,))] = 1.0
        assert is_localized(v, (3,), 50.0, 0.5, region)

    def test_uniform_vector(self):
        region = box_sites(Box((0.5,), 99))
        assert len(region) == 100
        v = np.full(100, 0.1)
        assert not is_localized(v, (0,), 1.0, 0.5, region)

    def test_vacuous_single_site(self):
        region = box_sites(Box.centered(1, 1))
        assert localization_is_vacuous(region, 0.5)
        assert is_localized(np.ones(1), (0,), 5.0, 0.5, region)

    def test_graph_matches_double_loop(self):
        H = hamiltonian(*_region_and_potential(1, 16, 0.05, 3))
        es = eigensystem(H)
        m, tau = 0.7, 0.5
        g = localization_graph(es, m, tau)
        count = sum(
            is_localized(es.vectors[:, j], H.region.coords[x], m, tau, H.region)
            for x in range(es.n)
            for j in range(es.n)
        )
        assert g.n_edges == count

    def test_graph_eps_zero_diagonal(self):
        r, eps, V = _region_and_potential(1, 10, 0.0, 1)
        es = eigensystem(hamiltonian(r, eps, V))
        g = localization_graph(es, 30.0, 0.5)
        lab = np.argsort(np.argsort(V.values))
        for x in range(len(r)):
            assert lab[x] in g.adjacency[x]


def _region_and_potential(d, side, eps, trial, seed=0):
    r = box_sites(Box.centered(d, side))
    return r, eps, sample_potential(r, UNIT, seed, trial)


class TestMatching:
    def test_complete(self):
        res = perfect_matching(BipartiteGraph.from_dense(np.ones((3, 3))))
        assert res.perfect and sorted(res.matching) == [0, 1, 2]

    def test_shared_neighbor(self):
        g = BipartiteGraph(3, 3, ((0,), (0,), (1, 2)))
        res = perfect_matching(g)
        assert not res.perfect
        assert res.witness == (0, 1) and res.witness_neighbors == (0,)

    def test_preferred_edges_kept(self):
        g = BipartiteGraph.from_dense(np.ones((4, 4)))
        assert perfect_matching(g, prefer=[2, 0, 3, 1]).matching == (2, 0, 3, 1)

    def test_rejects_unbalanced(self):
        with pytest.raises(InvalidArgument):
            perfect_matching(BipartiteGraph.from_dense(np.ones((2, 3))))

    @given(st.integers(0, 7), st.floats(0, 1), st.integers(0, 2**32 - 1))
    def test_against_exhaustive_hall(self, n, p, seed):
        g = random_graph(np.random.default_rng(seed), n, p)
        res = perfect_matching(g)
        assert res.perfect == hall_holds(n, [set(a) for a in g.adjacency])
        if res.perfect:
            assert len(set(res.matching)) == n
            assert all(res.matching[u] in g.adjacency[u] for u in range(n))
        else:
            assert len(g.neighborhood(res.witness)) < len(res.witness)


class TestCertify:
    def test_eps_zero_separated(self):
        r = box_sites(Box.centered(1, 6))
        V = Potential(r, np.linspace(0, 1, len(r))[::-1])
        cert = certify_m_localizing(hamiltonian(r, 0.0, V), 10.0, beta=0.8, tau=0.5)
        assert cert.verdict
        # eigenvalues ascend, so site x is matched to the rank of V(x)
        assert cert.matching == tuple(int(k) for k in np.argsort(np.argsort(V.values)))

    def test_eps_zero_repeated(self):
        r = box_sites(Box.centered(1, 4))
        V = Potential(r, [0.1, 0.5, 0.5, 0.7, 0.9])
        cert = certify_m_localizing(hamiltonian(r, 0.0, V), 10.0, beta=0.8, tau=0.5)
        assert not cert.level_spacing and not cert.verdict

    def test_reproducible(self):
        a = certify_m_localizing(hamiltonian(*_region_and_potential(1, 20, 1e-3, 4)), 2.0, beta=0.8, tau=0.5)
        b = certify_m_localizing(hamiltonian(*_region_and_potential(1, 20, 1e-3, 4)), 2.0, beta=0.8, tau=0.5)
        assert a.summary() == b.summary() and a.matching == b.matching

    def test_failure_has_witness(self):
        # weak disorder: extended states cannot be matched at a large mass
        cert = certify_m_localizing(hamiltonian(*_region_and_potential(1, 20, 1.0, 0)), 3.0, beta=0.8, tau=0.5)
        assert not cert.verdict and cert.witness is not None
        assert len(cert.witness_neighbors) < len(cert.witness)

    def test_needs_box(self):
        r = box_sites(Box.centered(1, 4)).difference(box_sites(Box.centered(1, 1)))
        H = hamiltonian(r, 0.0, sample_potential(r, UNIT, 0, 0))
        with pytest.raises(InvalidArgument):
            certify_m_localizing(H, 1.0, beta=0.8, tau=0.5)


class TestInitialStep:
    def test_mass_examples(self):
        L, beta, d = 20, 0.8, 1
        assert math.isclose(initial_mass(math.exp(-(L**beta)) / (2 * d), L, beta, d), math.log(2))
        eps0 = math.exp(-(10**beta)) / (4 * d)
        for eps in (eps0, eps0 / 10):
            assert initial_mass(eps, 10, beta, d) >= math.log(3) - 1e-12
        assert initial_mass(0.0, L, beta, d) == math.inf

    def test_separation_examples(self):
        assert potential_separation_ok([0.0, 0.5], 20, 0.8, 1e-12, 1)
        assert not potential_separation_ok([0.2, 0.2, 0.4], 20, 0.8, 1e-12, 1)
        assert potential_separation_ok([0.2], 20, 0.8, 1e-12, 1)

    def test_seeded_regime(self):
        L, beta, d = 20, 0.8, 1
        eps = math.exp(-(L**beta)) / (8 * d)
        held = 0
        for t in range(100):
            r, _, V = _region_and_potential(d, L, eps, t, seed=1)
            if not potential_separation_ok(V, L, beta, eps, d):
                with pytest.raises(PreconditionViolated):
                    initial_step_certify(hamiltonian(r, eps, V), beta=beta, tau=0.5)
                continue
            cert, m, rep = initial_step_certify(hamiltonian(r, eps, V), beta=beta, tau=0.5)
            assert rep.ok and cert.verdict
            assert math.isclose(m, initial_mass(eps, L, beta, d))
            held += 1
        assert held > 90


class TestProjection:
    def test_identity(self):
        es = eigensystem(hamiltonian(*_region_and_potential(1, 8, 0.1, 0)))
        diag = hall_condition_via_projection(es, range(es.n), range(es.n))
        assert diag.norm < 1e-12 and diag.certified

    def test_spanned_exactly(self):
        r, _, V = _region_and_potential(1, 8, 0.0, 0)
        es = eigensystem(hamiltonian(r, 0.0, V))
        rank = np.argsort(np.argsort(V.values))
        rows = [0, 3, 5]
        diag = hall_condition_via_projection(es, rows, rank[rows])
        assert diag.norm < 1e-12 and diag.count_ok

    @given(st.integers(0, 1000), st.sets(st.integers(0, 8), max_size=9), st.sets(st.integers(0, 8), max_size=9))
    def test_count_consistent(self, trial, rows, sel):
        es = eigensystem(hamiltonian(*_region_and_potential(1, 8, 0.05, trial)))
        diag = hall_condition_via_projection(es, rows, sel)
        if diag.certified:
            assert len(rows) <= len(sel)
        assert diag.count_ok


class TestDecayRates:
    P = validate_scale_params(0.1, 0.3, 0.4, 0.9, 1.5)

    def test_c_zero(self):
        rates = reference_decay_rates(2.0, 100, 1000, self.P, C=0)
        assert all(v == 2.0 for v in rates.values())

    def test_example(self):
        rates = reference_decay_rates(1.0, 100, 1000, self.P, C=1)
        assert math.isclose(rates["M"], 1 - 100**-0.05)

    @given(st.floats(0.1, 5), st.floats(2, 1e4), st.floats(0, 3))
    def test_ordering(self, m, ell, C):
        r = reference_decay_rates(m, ell, ell**self.P.gamma, self.P, C)
        assert r["M"] <= r["m3"] + 1e-12 and r["m3"] <= m

    def test_negative_c(self):
        with pytest.raises(InvalidArgument):
            reference_decay_rates(1, 100, 1000, self.P, C=-1)
