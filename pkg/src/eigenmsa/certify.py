"""Decision procedures: level spacing, localization, Hall matching, certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _core
from .errors import InvalidArgument, PreconditionViolated, ScaleParamError
from .lattice import Region, floor_power, sup_distance_matrix
from .model import AndersonHamiltonian, Potential
from .spectral import Eigensystem, bound_slack, eigensystem

__all__ = [
    "ScaleParams",
    "validate_scale_params",
    "is_level_spacing",
    "level_spacing_values",
    "is_localized",
    "localization_is_vacuous",
    "BipartiteGraph",
    "MatchingResult",
    "localization_graph",
    "perfect_matching",
    "LocalizationCertificate",
    "certify_m_localizing",
    "initial_mass",
    "potential_separation_ok",
    "InitialStepReport",
    "initial_step_certify",
    "ProjectionDiagnostic",
    "hall_condition_via_projection",
    "reference_decay_rates",
]


# ---------------------------------------------------------------- scale parameters


@dataclass(frozen=True)
class ScaleParams:
    xi: float
    zeta: float
    beta: float
    tau: float
    gamma: float

    @property
    def zeta_tilde(self) -> float:
        return (self.zeta + self.beta) / 2

    @property
    def tau_tilde(self) -> float:
        return (1 + self.tau) / 2

    def at_scale(self, L) -> dict:
        L = float(L)
        ell = L ** (1 / self.gamma)
        return {
            "L": L,
            "ell": ell,
            "L_tau": floor_power(L, self.tau),
            "L_tau_tilde": floor_power(L, self.tau_tilde),
            "N_ell": floor_power(ell, (self.gamma - 1) * self.zeta_tilde),
        }

    def as_dict(self) -> dict:
        return {"xi": self.xi, "zeta": self.zeta, "beta": self.beta, "tau": self.tau, "gamma": self.gamma}


def validate_scale_params(xi, zeta, beta, tau, gamma) -> ScaleParams:
    """Check the full chain of scale inequalities; raise with every violation named."""
    xi, zeta, beta, tau, gamma = (float(v) for v in (xi, zeta, beta, tau, gamma))
    checks = [
        ("0 < xi", 0 < xi),
        ("xi < zeta", xi < zeta),
        ("zeta < beta", zeta < beta),
        ("beta < 1/gamma", beta < 1 / gamma if gamma > 0 else False),
        ("1 < gamma", 1 < gamma),
        ("gamma < sqrt(zeta/xi)", xi > 0 and zeta > 0 and gamma < math.sqrt(zeta / xi)),
        ("gamma*beta < tau", gamma * beta < tau),
        ("((gamma-1)*beta+1)/gamma < tau", gamma > 0 and ((gamma - 1) * beta + 1) / gamma < tau),
        ("tau < 1", tau < 1),
    ]
    bad = [name for name, ok in checks if not ok]
    if bad:
        raise ScaleParamError(bad)
    chain = [
        ("xi*gamma^2 < zeta", xi * gamma**2 < zeta),
        ("beta < tau/gamma", beta < tau / gamma),
        ("tau/gamma < 1/gamma", tau / gamma < 1 / gamma),
        ("1/gamma < tau", 1 / gamma < tau),
        ("1 < (1-beta)/(tau-beta)", 1 < (1 - beta) / (tau - beta)),
        ("(1-beta)/(tau-beta) < gamma", (1 - beta) / (tau - beta) < gamma),
        ("gamma < tau/beta", gamma < tau / beta),
    ]
    bad = ["derived: " + name for name, ok in chain if not ok]
    if bad:
        raise ScaleParamError(bad)
    return ScaleParams(xi, zeta, beta, tau, gamma)


# ---------------------------------------------------------------- level spacing / localization


def _simplicity_tol(hnorm: float) -> float:
    return 1e-12 * max(1.0, hnorm)


def level_spacing_values(values: np.ndarray, R, beta, simplicity_tol: float | None = None) -> np.ndarray:
    """Vectorized level-spacing test over the last axis of sorted eigenvalues."""
    values = np.asarray(values, dtype=np.float64)
    R = float(R)
    if R < 1:
        raise InvalidArgument("R must be at least 1")
    if values.shape[-1] < 2:
        return np.ones(values.shape[:-1], dtype=bool)
    gaps = np.diff(values, axis=-1).min(axis=-1)
    if simplicity_tol is None:
        hnorm = np.abs(values).max(axis=-1)
        simplicity_tol = 1e-12 * np.maximum(1.0, hnorm)
    return (gaps > simplicity_tol) & (gaps >= math.exp(-(R**beta)))


def is_level_spacing(es, R, beta, simplicity_tol: float | None = None) -> bool:
    """All eigenvalues simple with consecutive gaps at least exp(-R^beta).

    ``es`` is an :class:`Eigensystem` or a sorted sequence of eigenvalues.
    """
    values = es.values if isinstance(es, Eigensystem) else np.asarray(es, dtype=np.float64)
    return bool(level_spacing_values(values, R, beta, simplicity_tol))


def _box_side(region: Region) -> Fraction:
    if region.box is None:
        raise InvalidArgument("localization is defined on boxes; region has no box")
    return region.box.side


def _thresholds(region: Region, m: float, cutoff: int, rows=None) -> np.ndarray:
    """thr[x, y] = exp(-m |x-y|) where |x-y| >= cutoff, +inf elsewhere."""
    xs = region.coords if rows is None else region.coords[rows]
    dist = sup_distance_matrix(xs, region.coords)
    with np.errstate(invalid="ignore", over="ignore"):
        thr = np.exp(-m * dist.astype(np.float64))
    thr[dist == 0] = 1.0
    thr[dist < cutoff] = np.inf
    return thr


def localization_is_vacuous(region: Region, tau: float) -> bool:
    """True when no pair of sites is at least floor(L^tau) apart."""
    cutoff = floor_power(_box_side(region), tau)
    return cutoff > 0 and region.diameter() < cutoff


def is_localized(v: np.ndarray, x, m: float, tau: float, region: Region) -> bool:
    """|v(y)| <= exp(-m |y-x|) at every y with |y-x| >= floor(L^tau)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (len(region),):
        raise InvalidArgument("vector length does not match the region")
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise InvalidArgument("vector is not normalized")
    if m < 0:
        raise InvalidArgument("m must be nonnegative")
    cutoff = floor_power(_box_side(region), tau)
    dist = np.abs(region.coords - np.asarray(x, dtype=np.int64)).max(axis=1)
    far = dist >= cutoff
    if not far.any():
        return True
    d = dist[far].astype(np.float64)
    with np.errstate(invalid="ignore"):
        bound = np.where(d == 0, 1.0, np.exp(-m * d))
    return bool((np.abs(v[far]) <= bound).all())


# ---------------------------------------------------------------- matching


@dataclass(frozen=True)
class BipartiteGraph:
    """Left vertices 0..n_left-1, right vertices 0..n_right-1.

    ``adjacency[u]`` is the ascending tuple of right neighbours of u.
    """

    n_left: int
    n_right: int
    adjacency: tuple

    @classmethod
    def from_dense(cls, mask: np.ndarray) -> "BipartiteGraph":
        mask = np.asarray(mask, dtype=bool)
        adj = tuple(tuple(int(j) for j in np.nonzero(row)[0]) for row in mask)
        return cls(mask.shape[0], mask.shape[1], adj)

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.adjacency)

    def csr(self):
        indptr = np.zeros(self.n_left + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in self.adjacency])
        indices = np.fromiter((j for a in self.adjacency for j in a), dtype=np.int64, count=int(indptr[-1]))
        return indptr, indices

    def neighborhood(self, left_vertices) -> tuple:
        out = set()
        for u in left_vertices:
            out.update(self.adjacency[u])
        return tuple(sorted(out))


@dataclass(frozen=True)
class MatchingResult:
    """Either ``matching`` (right vertex per left vertex) or a Hall witness."""

    matching: tuple | None
    witness: tuple | None
    witness_neighbors: tuple | None
    size: int

    @property
    def perfect(self) -> bool:
        return self.matching is not None


def perfect_matching(g: BipartiteGraph, prefer=None) -> MatchingResult:
    """Maximum matching by Hopcroft-Karp; a deficient set when none is perfect.

    ``prefer[u]``, when given and adjacent to u, is tried first for left
    vertex u, so a perfect matching made of preferred edges is returned as is.
    The witness is the set of left vertices reachable from unmatched left
    vertices by alternating paths; its neighbourhood is strictly smaller.
    """
    if g.n_left != g.n_right:
        raise InvalidArgument("perfect matching needs equally many left and right vertices")
    indptr, indices = g.csr()
    if prefer is not None:
        indices = indices.copy()
        for u in range(g.n_left):
            seg = indices[indptr[u] : indptr[u + 1]]
            hit = np.nonzero(seg == int(prefer[u]))[0]
            if hit.size:
                seg[0], seg[hit[0]] = seg[hit[0]], seg[0]
    match_l = _core.hopcroft_karp(g.n_left, g.n_right, indptr, indices)
    size = int((match_l >= 0).sum())
    if size == g.n_left:
        return MatchingResult(tuple(int(j) for j in match_l), None, None, size)
    match_r = np.full(g.n_right, -1, dtype=np.int64)
    for u, v in enumerate(match_l):
        if v >= 0:
            match_r[v] = u
    seen_l = set(int(u) for u in np.nonzero(match_l < 0)[0])
    seen_r = set()
    stack = sorted(seen_l)
    while stack:
        u = stack.pop()
        for v in g.adjacency[u]:
            if v in seen_r:
                continue
            seen_r.add(v)
            w = int(match_r[v])
            if w >= 0 and w not in seen_l:
                seen_l.add(w)
                stack.append(w)
    witness = tuple(sorted(seen_l))
    nbrs = g.neighborhood(witness)
    assert len(nbrs) < len(witness)
    return MatchingResult(None, witness, nbrs, size)


def localization_graph(es: Eigensystem, m: float, tau: float) -> BipartiteGraph:
    """Edge (x, j) iff eigenvector j is (x, m)-localized."""
    if m < 0:
        raise InvalidArgument("m must be nonnegative")
    cutoff = floor_power(_box_side(es.region), tau)
    thr = _thresholds(es.region, m, cutoff)
    mask = _core.localization_edges(np.abs(es.vectors), thr)
    return BipartiteGraph.from_dense(mask)


# ---------------------------------------------------------------- certificates


@dataclass(frozen=True)
class LocalizationCertificate:
    box: object
    m: float
    beta: float
    tau: float
    level_spacing: bool
    matching: tuple | None
    witness: tuple | None
    witness_neighbors: tuple | None
    vacuous: bool
    n_edges: int
    min_gap: float
    eigensystem: Eigensystem = field(repr=False, compare=False)

    @property
    def verdict(self) -> bool:
        return self.level_spacing and self.matching is not None

    def summary(self) -> dict:
        return {
            "verdict": self.verdict,
            "level_spacing": self.level_spacing,
            "matched": self.matching is not None,
            "witness_size": len(self.witness) if self.witness else 0,
            "witness_neighbors": len(self.witness_neighbors) if self.witness_neighbors else 0,
            "vacuous": self.vacuous,
            "n_edges": self.n_edges,
            "min_gap": self.min_gap,
        }


def _beta_tau(params, beta, tau):
    if params is not None:
        beta = params.beta if beta is None else beta
        tau = params.tau if tau is None else tau
    if beta is None or tau is None:
        raise InvalidArgument("beta and tau are required")
    if not (0 < tau < 1) or not (0 < beta < 1):
        raise InvalidArgument("beta and tau must lie in (0, 1)")
    return float(beta), float(tau)


def certify_m_localizing(
    H: AndersonHamiltonian,
    m: float,
    params=None,
    *,
    beta: float | None = None,
    tau: float | None = None,
    es: Eigensystem | None = None,
) -> LocalizationCertificate:
    """Decide whether the box carrying ``H`` is m-localizing.

    ``params`` may be a :class:`ScaleParams`; ``beta``/``tau`` override it.
    """
    beta, tau = _beta_tau(params, beta, tau)
    box = H.region.box
    if box is None:
        raise InvalidArgument("H must be defined on a box")
    if es is None:
        es = eigensystem(H)
    spacing = is_level_spacing(es, box.side, beta)
    g = localization_graph(es, m, tau)
    # try each site's dominant eigenvector first
    res = perfect_matching(g, prefer=np.argmax(np.abs(es.vectors), axis=1))
    region = H.region
    if res.matching is not None:
        for i, j in enumerate(res.matching):
            if not is_localized(es.vectors[:, j], region.coords[i], m, tau, region):
                raise AssertionError(f"matched pair ({i}, {j}) fails re-verification")
    else:
        cutoff = floor_power(box.side, tau)
        thr = _thresholds(region, m, cutoff, rows=np.asarray(res.witness))
        absv = np.abs(es.vectors)
        nbrs = set()
        for row in thr:
            far = np.isfinite(row)
            ok = (absv[far] <= row[far][:, None]).all(axis=0)
            nbrs.update(int(j) for j in np.nonzero(ok)[0])
        if len(nbrs) >= len(res.witness):
            raise AssertionError("Hall witness fails independent recount")
    return LocalizationCertificate(
        box=box,
        m=float(m),
        beta=beta,
        tau=tau,
        level_spacing=spacing,
        matching=res.matching,
        witness=res.witness,
        witness_neighbors=res.witness_neighbors,
        vacuous=localization_is_vacuous(region, tau),
        n_edges=g.n_edges,
        min_gap=es.min_gap(),
        eigensystem=es,
    )


def initial_mass(eps: float, L, beta: float, d: int) -> float:
    """log(1 + exp(-L^beta) / (2 d eps)); infinite when eps = 0."""
    if eps < 0:
        raise InvalidArgument("eps must be nonnegative")
    if eps == 0:
        return math.inf
    return math.log1p(math.exp(-(float(L) ** beta)) / (2 * d * eps))


def _separation_threshold(L, beta, eps, d) -> float:
    # (1 + kappa) exp(-L^beta) with kappa = 4 d eps exp(L^beta)
    return math.exp(-(float(L) ** beta)) + 4 * d * eps


def potential_separation_ok(potential, L, beta, eps, d) -> bool:
    vals = potential.values if isinstance(potential, Potential) else np.asarray(potential, dtype=np.float64)
    if vals.size < 2:
        return True
    return bool(np.diff(np.sort(vals)).min() >= _separation_threshold(L, beta, eps, d))


@dataclass(frozen=True)
class InitialStepReport:
    m: float
    eta: float
    labeling: tuple
    labeling_bijective: bool
    min_gap: float
    spacing_violations: int
    weyl_violations: int
    decay_violations: int
    max_weyl_error: float
    max_decay_ratio: float

    @property
    def ok(self) -> bool:
        return (
            self.labeling_bijective
            and self.spacing_violations == 0
            and self.weyl_violations == 0
            and self.decay_violations == 0
        )


def initial_step_certify(H: AndersonHamiltonian, params=None, *, beta=None, tau=None) -> tuple:
    """Perturbative certificate for strong disorder.

    Returns ``(certificate, m, report)`` with m = :func:`initial_mass`.
    """
    beta, tau = _beta_tau(params, beta, tau)
    box = H.region.box
    if box is None:
        raise InvalidArgument("H must be defined on a box")
    L, eps, d = box.side, H.eps, H.d
    V = H.potential.values
    if not potential_separation_ok(V, L, beta, eps, d):
        raise PreconditionViolated("potential values are not separated enough")
    m = initial_mass(eps, L, beta, d)
    es = eigensystem(H)
    slack = bound_slack(es.hnorm)
    eta = _separation_threshold(L, beta, eps, d)
    lab = np.argmin(np.abs(V[:, None] - es.values[None, :]), axis=1)
    bijective = len(set(lab.tolist())) == len(lab)
    gaps = np.diff(es.values)
    spacing_bad = int((gaps < eta - 4 * d * eps - slack).sum())
    weyl = np.abs(es.values[lab] - V)
    weyl_bad = int((weyl > 2 * d * eps + slack).sum())
    # column y of psi holds the eigenvector labeled by site y
    psi = np.abs(es.vectors[:, lab])
    dist = sup_distance_matrix(H.region.coords, H.region.coords).astype(np.float64)
    with np.errstate(invalid="ignore", over="ignore"):
        bound = np.where(dist == 0, 1.0, np.exp(-m * dist))
    decay_bad = int((psi > bound + slack).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, psi / bound, np.where(psi > 0, np.inf, 0.0))
    report = InitialStepReport(
        m=m,
        eta=eta,
        labeling=tuple(int(j) for j in lab),
        labeling_bijective=bijective,
        min_gap=float(gaps.min()) if gaps.size else math.inf,
        spacing_violations=spacing_bad,
        weyl_violations=weyl_bad,
        decay_violations=decay_bad,
        max_weyl_error=float(weyl.max(initial=0.0)),
        max_decay_ratio=float(ratio.max(initial=0.0)),
    )
    cert = certify_m_localizing(H, m, beta=beta, tau=tau, es=es)
    return cert, m, report


# ---------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class ProjectionDiagnostic:
    norm: float
    certified: bool
    theta_size: int
    selected_size: int
    count_ok: bool


def hall_condition_via_projection(es: Eigensystem, theta_rows, selected) -> ProjectionDiagnostic:
    """Norm of (1 - Q) chi_Theta, Q the projection onto the selected eigenvectors.

    A norm below one forces |Theta| <= |selected|; the comparison allows
    1e-9 for rounding.
    """
    theta_rows = np.asarray(sorted(set(int(r) for r in theta_rows)), dtype=np.int64)
    selected = np.asarray(sorted(set(int(j) for j in selected)), dtype=np.int64)
    n = es.n
    chi = np.zeros((n, theta_rows.size))
    chi[theta_rows, np.arange(theta_rows.size)] = 1.0
    q = es.vectors[:, selected]
    rest = chi - q @ (q.T @ chi)
    norm = float(np.linalg.norm(rest, 2)) if theta_rows.size else 0.0
    # a norm of exactly one is the generic rank-deficient case; leave room for rounding
    certified = norm < 1.0 - 1e-9
    return ProjectionDiagnostic(
        norm=norm,
        certified=certified,
        theta_size=int(theta_rows.size),
        selected_size=int(selected.size),
        count_ok=(not certified) or theta_rows.size <= selected.size,
    )


def reference_decay_rates(m: float, ell: float, L: float, params: ScaleParams, C: float = 1.0) -> dict:
    """Reference lower bounds for the decay rates, with implicit constants set to C."""
    if C < 0:
        raise InvalidArgument("C must be nonnegative")
    m, ell, L = float(m), float(ell), float(L)
    tau, gamma, beta = params.tau, params.gamma, params.beta
    zt = params.zeta_tilde
    m_tight = m * (1 - C * ell ** (gamma * beta - tau))
    return {
        "m1": m * (1 - C * math.log(ell) / ell**tau),
        "m1_L": m * (1 - C * math.log(L) / L**tau),
        "m2": m_tight,
        "m3": m * (1 - C * ell ** ((tau - 1) / 2)),
        "m4": m_tight,
        "m5": m_tight,
        "M": m * (1 - C * ell ** (-min((1 - tau) / 2, gamma * tau - (gamma - 1) * zt - 1))),
    }
