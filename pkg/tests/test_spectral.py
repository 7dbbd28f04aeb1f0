import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from eigenmsa.certify import initial_mass, initial_step_certify, potential_separation_ok
from eigenmsa.errors import AmbiguousNearest, InvalidArgument, NearSingular, PreconditionViolated
from eigenmsa.lattice import Box, Region, box_sites
from eigenmsa.model import Potential, SingleSiteDistribution, hamiltonian, sample_potential
from eigenmsa.spectral import align_eigenpair, defect, eigensystem, green_matrix, lift_eigenpairs

UNIT = SingleSiteDistribution.uniform(0, 1)


def path(n, eps=1.0, values=None):
    r = Region([(i,) for i in range(n)])
    v = np.zeros(n) if values is None else values
    return hamiltonian(r, eps, Potential(r, v))


def random_H(d, side, eps, seed, trial=0):
    r = box_sites(Box.centered(d, side))
    return hamiltonian(r, eps, sample_potential(r, UNIT, seed, trial))


class TestEigensystem:
    @pytest.mark.parametrize("n", [5, 50])
    def test_path_closed_form(self, n):
        es = eigensystem(path(n, 0.7))
        j = np.arange(1, n + 1)
        exact = np.sort(-2 * 0.7 * np.cos(np.pi * j / (n + 1)))
        assert np.abs(es.values - exact).max() < 1e-10

    def test_single_site(self):
        r = Region([(3,)])
        es = eigensystem(hamiltonian(r, 1.0, Potential(r, [0.25])))
        assert es.values.tolist() == [0.25]
        assert es.vectors.tolist() == [[1.0]]

    def test_random_invariants(self):
        r = box_sites(Box((Fraction(1, 2), Fraction(1, 2)), 9))
        es = eigensystem(hamiltonian(r, 0.4, sample_potential(r, UNIT, 1, 0)))
        assert es.n == 100
        assert es.max_residual < 1e-10 and es.max_ortho_error < 1e-10

    def test_sign_convention(self):
        es = eigensystem(random_H(1, 30, 0.3, 2))
        idx = np.argmax(np.abs(es.vectors), axis=0)
        assert (es.vectors[idx, np.arange(es.n)] > 0).all()

    @given(st.integers(1, 2), st.integers(1, 6), st.floats(0, 1), st.integers(0, 500))
    def test_weyl_displacement(self, d, side, eps, trial):
        r = box_sites(Box.centered(d, side))
        V = sample_potential(r, UNIT, 3, trial)
        w0 = np.sort(V.values)
        w = eigensystem(hamiltonian(r, eps, V)).values
        assert np.abs(w - w0).max() <= 2 * d * eps + 1e-12


class TestGreen:
    def test_diagonal(self):
        r = box_sites(Box.centered(1, 6))
        V = sample_potential(r, UNIT, 0, 0)
        G = green_matrix(hamiltonian(r, 0.0, V), 2.0)
        assert np.allclose(G, np.diag(1 / (V.values - 2.0)), rtol=1e-14)

    def test_two_by_two(self):
        G = green_matrix(path(2), 0.0)
        assert np.allclose(G, [[0, -1], [-1, 0]], atol=1e-14)

    @given(st.integers(1, 2), st.integers(2, 7), st.floats(0, 1), st.floats(-1, 2), st.integers(0, 100))
    def test_inverse(self, d, side, eps, z, trial):
        H = random_H(d, side, eps, 4, trial)
        es = eigensystem(H)
        assume(np.abs(es.values - z).min() > 1e-6)
        G = green_matrix(H, z, es)
        assert np.array_equal(G, G.T)
        resid = (H.matrix - z * np.eye(H.n)) @ G - np.eye(H.n)
        assert np.abs(resid).max() <= 1e-8 * max(1.0, np.abs(G).max())
        assert math.isclose(np.linalg.norm(G, 2), 1 / np.abs(es.values - z).min(), rel_tol=1e-9)

    def test_near_singular(self):
        H = path(2)
        with pytest.raises(NearSingular):
            green_matrix(H, 1.0)


class TestDefect:
    def test_full_region(self):
        H = random_H(1, 9, 0.3, 0)
        es = eigensystem(H)
        rep = defect(es.vectors[:, 3], es.values[3], H.region, H)
        assert rep.defect < 1e-12 and rep.holds()

    def test_one_edge(self):
        H = path(2, 0.25)
        rep = defect(np.array([1.0]), 0.0, Region([(0,)]), H)
        assert math.isclose(rep.defect, 0.25) and math.isclose(rep.bound, 0.25)
        assert rep.holds()

    @given(st.integers(1, 2), st.integers(2, 6), st.integers(1, 3), st.floats(0, 1), st.integers(0, 10**5))
    def test_box_bounds(self, d, side, pad, eps, trial):
        outer = random_H(d, side + 2 * pad, eps, 6, trial)
        inner = box_sites(Box.centered(d, side))
        es = eigensystem(outer.restrict(inner))
        w = np.linalg.eigvalsh(outer.matrix)
        for j in range(0, es.n, max(1, es.n // 4)):
            rep = defect(es.vectors[:, j], es.values[j], inner, outer, w)
            assert rep.bound_applicable and rep.box_bound is not None
            assert rep.holds()

    def test_general_subset_reports_contacts(self):
        # a ring with a one-site hole: the hole touches the ring four times
        outer = random_H(2, 4, 0.5, 7)
        inner = outer.region.difference(Region([(0, 0)]))
        es = eigensystem(outer.restrict(inner))
        rep = defect(es.vectors[:, 0], es.values[0], inner, outer)
        assert rep.max_contacts == 4 and not rep.bound_applicable
        assert rep.spectral_distance <= rep.defect + rep.slack

    def test_rejects_unnormalized(self):
        H = path(3)
        with pytest.raises(InvalidArgument):
            defect(np.array([2.0]), 0.0, Region([(0,)]), H)


class TestAlign:
    def test_exact_eigenvector(self):
        H = random_H(1, 9, 0.3, 1)
        es = eigensystem(H)
        rep = align_eigenpair(es.vectors[:, 2], es.values[2], H, es)
        assert rep.delta < 1e-12 and rep.perp_norm < 1e-12 and rep.aligned_distance < 1e-12
        assert rep.holds()

    @given(st.floats(1e-4, 0.05), st.integers(0, 500))
    def test_two_level(self, theta, trial):
        H = random_H(1, 9, 0.3, 2, trial)
        es = eigensystem(H)
        mu, other = 4, 5
        phi = (es.vectors[:, mu] + theta * es.vectors[:, other]) / math.sqrt(1 + theta**2)
        rep = align_eigenpair(phi, es.values[mu], H, es)
        assert math.isclose(rep.perp_norm, theta / math.sqrt(1 + theta**2), rel_tol=1e-6, abs_tol=1e-12)
        if rep.applicable:
            assert rep.holds()
            assert rep.perp_norm <= math.sqrt(2) * rep.delta / rep.eta + rep.slack

    def test_not_applicable(self):
        H = path(2)
        phi = np.array([1.0, 0.0])
        rep = align_eigenpair(phi, 0.5, H)
        assert not rep.applicable and rep.holds() is None

    def test_ambiguous(self):
        H = path(2)
        with pytest.raises(AmbiguousNearest):
            align_eigenpair(np.array([1.0, 0.0]), 0.0, H)


class TestLift:
    def test_identity(self):
        H = random_H(1, 12, 0.0, 0)
        es = eigensystem(H)
        lab = np.argsort(np.argsort(H.potential.values))
        rep = lift_eigenpairs(es, lab, H, es, 0.5, 0.8, 5.0, 12)
        assert rep.injective and rep.ok
        assert all(e.eigenvalue_distance == 0 and e.vector_distance == 0 for e in rep.entries)

    def test_eps_zero(self):
        big = random_H(1, 20, 0.0, 1)
        sub_region = box_sites(Box.centered(1, 12))
        sub = eigensystem(big.restrict(sub_region))
        bes = eigensystem(big)
        Vs = big.potential.restrict(sub_region).values
        lab = np.argsort(np.argsort(Vs))
        rep = lift_eigenpairs(sub, lab, big, bes, 0.5, 0.8, 5.0, 20)
        for e in rep.entries:
            assert bes.values[e.big_index] == Vs[sub_region.row(e.site)]

    def test_initial_regime(self):
        eps, beta, tau = 1e-6, 0.8, 0.5
        sub_region = box_sites(Box.centered(1, 12))
        checked = 0
        for t in range(100):
            big = random_H(1, 20, eps, 11, t)
            Hs = big.restrict(sub_region)
            if not potential_separation_ok(Hs.potential, 12, beta, eps, 1):
                continue
            _, m, report = initial_step_certify(Hs, beta=beta, tau=tau)
            try:
                rep = lift_eigenpairs(eigensystem(Hs), report.labeling, big, eigensystem(big), tau, beta, m, 20)
            except PreconditionViolated:
                continue
            assert rep.ok
            checked += 1
        assert checked > 50
        assert initial_mass(eps, 12, beta, 1) > 0
