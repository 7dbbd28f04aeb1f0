"""Green's functions: regularity, the geometric resolvent identity, and
experiments relating regular boxes to localizing boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .certify import (
    BipartiteGraph,
    certify_m_localizing,
    initial_mass,
    is_level_spacing,
    is_localized,
    perfect_matching,
)
from .errors import InvalidArgument
from .lattice import Box, as_rational, box_sites, boundaries, sup_distance_matrix, suitable_cover
from .model import AndersonHamiltonian, AndersonModel, hamiltonian, hamiltonian_batch, sample_potential, sample_potential_block
from .probability import McEstimate, rational_round, run_chunked
from .spectral import NEAR_SINGULAR, Eigensystem, eigensystem

__all__ = [
    "RegularityReport",
    "ResolventCheck",
    "CrossReport",
    "LabelingReport",
    "is_regular",
    "geometric_resolvent_check",
    "wegner_bound",
    "wegner_empirical",
    "probe_energies",
    "localizing_implies_regular_experiment",
    "regular_implies_localizing_experiment",
]


@dataclass(frozen=True)
class RegularityReport:
    E: float
    m: float
    is_regular: bool
    near_singular: bool
    worst_pair: tuple | None
    worst_ratio: float
    resolvent_norm: float

    @property
    def margin(self) -> float:
        """max over tested pairs of log|G(x,y)| + m|x-y|; regular iff <= 0."""
        if self.worst_ratio == 0:
            return -math.inf
        return math.log(self.worst_ratio)


def _regularity(es: Eigensystem, E: float, m: float, pair_mask: np.ndarray, dist: np.ndarray) -> RegularityReport:
    gap = float(np.abs(es.values - E).min())
    norm = math.inf if gap == 0 else 1.0 / gap
    if gap <= NEAR_SINGULAR * max(1.0, es.hnorm):
        return RegularityReport(E, m, False, True, None, math.inf, norm)
    if not pair_mask.any():
        return RegularityReport(E, m, True, False, None, 0.0, norm)
    G = es.green(E)
    absg = np.abs(G[pair_mask])
    with np.errstate(over="ignore", invalid="ignore"):
        # exact zeros stay zero even when exp(m |x-y|) overflows
        ratio = np.where(absg > 0, absg * np.exp(m * dist[pair_mask]), 0.0)
    k = int(np.argmax(ratio))
    rows, cols = np.nonzero(pair_mask)
    sites = es.region.sites
    worst = (sites[rows[k]], sites[cols[k]])
    r = float(ratio[k])
    return RegularityReport(E, m, bool(r <= 1.0), False, worst, r, norm)


def _pair_mask(region, side: Fraction):
    dist = sup_distance_matrix(region.coords, region.coords)
    mask = (dist >= side / 100) & (dist > 0) if side > 0 else dist > 0
    return np.asarray(mask, dtype=bool), dist.astype(np.float64)


def is_regular(H: AndersonHamiltonian, E: float, m: float, es: Eigensystem | None = None) -> RegularityReport:
    """|G(E; x, y)| <= exp(-m |x-y|) for all pairs at distance >= L/100."""
    box = H.region.box
    if box is None:
        raise InvalidArgument("H must be defined on a box")
    if box.side < 1:
        raise InvalidArgument("box side must be at least 1")
    if es is None:
        es = eigensystem(H)
    mask, dist = _pair_mask(H.region, box.side)
    return _regularity(es, float(E), float(m), mask, dist)


@dataclass(frozen=True)
class ResolventCheck:
    residual: float
    tolerance: float
    skipped: bool
    gap: float
    boundary_edges: int

    @property
    def ok(self) -> bool:
        return self.skipped or self.residual <= self.tolerance


def geometric_resolvent_check(H: AndersonHamiltonian, sub: Box, phi: np.ndarray, lam: float) -> ResolventCheck:
    """Residual of phi(x) = sum over boundary edges (u, v) of eps G_sub(lam; x, u) phi(v).

    ``phi`` is an eigenvector of H with eigenvalue ``lam``.  The tolerance is
    1e-8 times the condition number of H_sub - lam.
    """
    big = H.region
    sub_region = box_sites(sub)
    if not sub_region.issubset(big):
        raise InvalidArgument("sub-box is not contained in the region")
    if len(sub_region) == len(big):
        raise InvalidArgument("sub-box must be a proper subset of the region")
    phi = np.asarray(phi, dtype=np.float64)
    Hs = H.restrict(sub_region)
    es = eigensystem(Hs)
    gap = float(np.abs(es.values - lam).min())
    bd = boundaries(sub_region, big)
    if gap <= 1e-10:
        return ResolventCheck(math.nan, math.nan, True, gap, len(bd.edges))
    G = es.green(lam)
    rhs = np.zeros(len(sub_region))
    for u, v in bd.edges:
        rhs += H.eps * G[:, sub_region.row(u)] * phi[big.row(v)]
    lhs = phi[big.rows_of(sub_region)]
    hnorm = max(1.0, float(np.abs(es.values - lam).max()))
    cond = hnorm / gap
    return ResolventCheck(float(np.abs(lhs - rhs).max()), 1e-8 * max(1.0, cond), False, gap, len(bd.edges))


# ---------------------------------------------------------------- Wegner


def wegner_bound(model: AndersonModel, L, beta: float) -> float | None:
    """1 - K~ 2^alpha exp(-alpha L^beta) (L+1)^d."""
    dist = model.dist
    if not dist.holder:
        return None
    L = float(L)
    return 1 - dist.K_tilde * 2**dist.alpha * math.exp(-dist.alpha * L**beta) * (L + 1) ** model.d


@dataclass(frozen=True)
class _WegnerTask:
    model: AndersonModel
    side: Fraction
    E: float
    beta: float
    seed: int

    def __call__(self, start, stop):
        region = box_sites(Box.centered(self.model.d, self.side))
        V = sample_potential_block(len(region), self.model.dist, self.seed, np.arange(start, stop))
        ev = V if self.model.eps == 0 else np.linalg.eigvalsh(hamiltonian_batch(region, self.model.eps, V))
        gap = np.abs(ev - self.E).min(axis=1)
        return gap >= math.exp(-(float(self.side) ** self.beta))


def wegner_empirical(model: AndersonModel, L, E: float, beta: float, trials: int = 100, master_seed: int = 0, *, workers: int = 1) -> McEstimate:
    """Frequency of ||G_L(E)|| <= exp(L^beta) on the centered box of side L."""
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    side = as_rational(L) if isinstance(L, (int, Fraction)) else rational_round(L)
    task = _WegnerTask(model, side, float(E), float(beta), int(master_seed))
    ok = np.concatenate(run_chunked(task, trials, workers))
    return McEstimate.from_counts(int(ok.sum()), trials, wegner_bound(model, side, beta))


# ---------------------------------------------------------------- cross experiments


def probe_energies(values: np.ndarray, potential: np.ndarray, eps: float, d: int, uniforms: np.ndarray, n_gap: int) -> np.ndarray:
    """Uniform energies in [min V - 2 d eps, max V + 2 d eps] plus midpoints of
    the ``n_gap`` widest spectral gaps."""
    lo = float(potential.min()) - 2 * d * eps
    hi = float(potential.max()) + 2 * d * eps
    energies = list(lo + (hi - lo) * np.asarray(uniforms))
    if values.size > 1 and n_gap > 0:
        gaps = np.diff(values)
        order = np.argsort(-gaps, kind="stable")[:n_gap]
        energies.extend(0.5 * (values[order] + values[order + 1]))
    return np.asarray(energies, dtype=np.float64)


@dataclass(frozen=True)
class CrossReport:
    trials: int
    probes: int
    localizing_trials: int
    hypothesis_count: int
    excluded_norm: int
    regular_count: int
    worst_margin: float
    counterexamples: tuple = field(default=(), compare=False)

    @property
    def pass_fraction(self) -> float:
        if self.hypothesis_count == 0:
            return math.nan
        return self.regular_count / self.hypothesis_count


@dataclass(frozen=True)
class _CrossTask:
    model: AndersonModel
    side: Fraction
    m: float
    m_prime: float
    beta: float
    tau: float
    seed: int
    n_uniform: int
    n_gap: int

    def __call__(self, start, stop):
        d = self.model.d
        region = box_sites(Box.centered(d, self.side))
        mask, dist = _pair_mask(region, self.side)
        cap = math.exp(float(self.side) ** self.beta)
        rows = []
        for t in range(start, stop):
            V = sample_potential(region, self.model.dist, self.seed, t)
            H = hamiltonian(region, self.model.eps, V)
            es = eigensystem(H)
            cert = certify_m_localizing(H, self.m, beta=self.beta, tau=self.tau, es=es)
            u = sample_potential_block(self.n_uniform, _UNIT, self.seed, [t], stream=1)[0] if self.n_uniform else []
            energies = probe_energies(es.values, V.values, self.model.eps, d, u, self.n_gap)
            for E in energies:
                rep = None
                held = False
                norm_ok = float(np.abs(es.values - E).min()) >= 1.0 / cap
                if cert.verdict and norm_ok:
                    held = True
                    rep = _regularity(es, float(E), self.m_prime, mask, dist)
                rows.append((t, float(E), cert.verdict, norm_ok, held, rep.is_regular if rep else False, rep.margin if rep else math.nan))
        return rows


def _sup(a, b) -> Fraction:
    return max(abs(Fraction(x) - Fraction(y)) for x, y in zip(a, b))


class _Unit:
    """Uniform [0, 1) through the per-site counter generator."""

    @staticmethod
    def ppf(u):
        return np.asarray(u, dtype=np.float64)


_UNIT = _Unit()


def localizing_implies_regular_experiment(
    model: AndersonModel,
    L,
    m: float | None = None,
    m_prime: float | None = None,
    beta: float = 0.8,
    trials: int = 100,
    master_seed: int = 0,
    *,
    tau: float = 0.5,
    n_uniform: int = 3,
    n_gap: int = 2,
    workers: int = 1,
) -> CrossReport:
    """Among (trial, energy) probes where the box is m-localizing and the
    resolvent norm is at most exp(L^beta), count (m', E)-regular boxes."""
    side = as_rational(L) if isinstance(L, (int, Fraction)) else rational_round(L)
    if m is None:
        m = initial_mass(model.eps, side, beta, model.d)
    if m_prime is None:
        m_prime = m / 2
    if not m_prime < m:
        raise InvalidArgument("m' must be smaller than m")
    task = _CrossTask(model, side, float(m), float(m_prime), float(beta), float(tau), int(master_seed), int(n_uniform), int(n_gap))
    rows = [r for chunk in run_chunked(task, trials, workers, chunk=32) for r in chunk]
    held = [r for r in rows if r[4]]
    margins = [r[6] for r in held]
    return CrossReport(
        trials=trials,
        probes=len(rows),
        localizing_trials=len({r[0] for r in rows if r[2]}),
        hypothesis_count=len(held),
        excluded_norm=sum(1 for r in rows if r[2] and not r[3]),
        regular_count=sum(1 for r in held if r[5]),
        worst_margin=max(margins) if margins else -math.inf,
        counterexamples=tuple((r[0], r[1]) for r in held if not r[5]),
    )


@dataclass(frozen=True)
class LabelingReport:
    trials: int
    L: Fraction
    ell: Fraction
    hypothesis_count: int
    level_spacing_failures: int
    matching_count: int
    localized_count: int

    @property
    def labeling_fraction(self) -> float:
        if self.hypothesis_count == 0:
            return math.nan
        return self.matching_count / self.hypothesis_count

    @property
    def localized_fraction(self) -> float:
        if self.hypothesis_count == 0:
            return math.nan
        return self.localized_count / self.hypothesis_count


@dataclass(frozen=True)
class _LabelTask:
    model: AndersonModel
    L: Fraction
    ell: Fraction
    m: float
    m_prime: float
    beta: float
    tau: float
    seed: int

    def __call__(self, start, stop):
        d = self.model.d
        parent = Box.centered(d, self.L)
        region = box_sites(parent)
        cover = suitable_cover(parent, self.ell)
        centers = np.array([[float(c) for c in a] for a in cover.centers])
        sub_regions = [box_sites(b) for b in cover.boxes]
        masks = [_pair_mask(r, self.ell) for r in sub_regions]
        # exact rational comparisons for the two geometric relations
        far = np.array([[_sup(a, b) > self.ell for b in cover.centers] for a in cover.centers])
        reach = (2 * cover.rho + 1) * self.ell / 2
        near = np.array([[_sup(x, a) <= reach for a in cover.centers] for x in region.sites])
        out = []
        for t in range(start, stop):
            V = sample_potential(region, self.model.dist, self.seed, t)
            H = hamiltonian(region, self.model.eps, V)
            es = eigensystem(H)
            spacing = is_level_spacing(es, self.L, self.beta)
            sub_es = [eigensystem(H.restrict(r)) for r in sub_regions]
            anchors = []
            hypothesis = True
            for j, lam in enumerate(es.values):
                regular = np.array([
                    _regularity(se, float(lam), self.m, mk, dd).is_regular
                    for se, (mk, dd) in zip(sub_es, masks)
                ])
                valid = [a for a in range(len(centers)) if regular[far[a]].all()]
                if not valid:
                    hypothesis = False
                    break
                peak = region.coords[int(np.argmax(np.abs(es.vectors[:, j])))]
                score = [np.abs(centers[a] - peak).max() for a in valid]
                anchors.append(valid[int(np.argmin(score))])
            if not hypothesis:
                out.append((False, spacing, False, False))
                continue
            anchors = np.asarray(anchors)
            adj = near[:, anchors]
            res = perfect_matching(BipartiteGraph.from_dense(adj))
            localized = False
            if res.matching is not None:
                localized = all(
                    is_localized(es.vectors[:, j], region.coords[i], self.m_prime, self.tau, region)
                    for i, j in enumerate(res.matching)
                )
            out.append((True, spacing, res.matching is not None, localized))
        return out


def regular_implies_localizing_experiment(
    model: AndersonModel,
    ell,
    gamma: float,
    m: float,
    m_prime: float | None = None,
    beta: float = 0.8,
    tau: float = 0.8,
    trials: int = 100,
    master_seed: int = 0,
    *,
    workers: int = 1,
) -> LabelingReport:
    """Labeling experiment on the box of side L = ell^gamma.

    For each eigenvalue lambda of the big box, the sub-boxes of the suitable
    ell-cover are tested for (m, lambda)-regularity; an anchor center a_lambda
    must have every cover box farther than ell from it regular.  Sites are then
    matched to eigenvalues whose anchor box of side (2 rho + 1) ell contains
    them, and the matched eigenvectors are tested for (x, m')-localization.
    """
    ell = as_rational(ell)
    L = rational_round(float(ell) ** gamma)
    if m_prime is None:
        m_prime = m / 2
    if not m_prime < m:
        raise InvalidArgument("m' must be smaller than m")
    suitable_cover(Box.centered(model.d, L), ell)
    task = _LabelTask(model, L, ell, float(m), float(m_prime), float(beta), float(tau), int(master_seed))
    rows = [r for chunk in run_chunked(task, trials, workers, chunk=16) for r in chunk]
    gated = [r for r in rows if r[0] and r[1]]
    return LabelingReport(
        trials=trials,
        L=L,
        ell=ell,
        hypothesis_count=len(gated),
        level_spacing_failures=sum(1 for r in rows if r[0] and not r[1]),
        matching_count=sum(1 for r in gated if r[2]),
        localized_count=sum(1 for r in gated if r[3]),
    )
