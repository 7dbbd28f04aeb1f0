"""Eigensystems, resolvents, eigenpair defects, alignment and lifting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousNearest, InvalidArgument, NearSingular, PreconditionViolated, SolverFailure
from .lattice import Region, boundaries, floor_power, interior
from .model import AndersonHamiltonian

__all__ = [
    "Eigensystem",
    "DefectReport",
    "AlignmentReport",
    "LiftEntry",
    "LiftReport",
    "eigensystem",
    "green_matrix",
    "defect",
    "align_eigenpair",
    "lift_eigenpairs",
    "reference_m1",
    "bound_slack",
]

NEAR_SINGULAR = 1e-12


def bound_slack(hnorm: float) -> float:
    """Additive slack used by every bound comparison."""
    return 1e-9 * max(1.0, float(hnorm))


@dataclass(frozen=True)
class Eigensystem:
    region: Region
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)
    residual_tol: float
    hnorm: float
    max_residual: float
    max_ortho_error: float

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def vector(self, j: int) -> np.ndarray:
        return self.vectors[:, j]

    def green(self, z: float) -> np.ndarray:
        dist = np.abs(self.values - z)
        if dist.size and dist.min() <= NEAR_SINGULAR * max(1.0, self.hnorm):
            raise NearSingular(f"z={z!r} is within {dist.min():.3e} of the spectrum", float(dist.min()))
        g = (self.vectors / (self.values - z)) @ self.vectors.T
        return 0.5 * (g + g.T)

    def min_gap(self) -> float:
        if self.n < 2:
            return math.inf
        return float(np.diff(self.values).min())


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    s = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    s[s == 0] = 1.0
    return vectors * s


def eigensystem(H: AndersonHamiltonian, residual_tol: float = 1e-10) -> Eigensystem:
    """Full eigendecomposition with a residual and orthonormality self-check.

    Eigenvalues ascend; each eigenvector's largest-magnitude entry is positive.
    """
    mat = H.matrix
    try:
        w, v = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure("eigh did not converge", {"n": H.n}) from exc
    v = _fix_signs(v)
    hnorm = float(np.abs(w).max(initial=0.0))
    scale = residual_tol * max(1.0, hnorm)
    resid = np.linalg.norm(mat @ v - v * w, axis=0)
    max_res = float(resid.max(initial=0.0))
    ortho = float(np.abs(v.T @ v - np.eye(v.shape[1])).max(initial=0.0))
    if max_res > scale or ortho > residual_tol:
        raise SolverFailure(
            "eigensystem failed self-check",
            {"max_residual": max_res, "max_ortho_error": ortho, "tolerance": scale},
        )
    w.setflags(write=False)
    v.setflags(write=False)
    return Eigensystem(H.region, w, v, residual_tol, hnorm, max_res, ortho)


def green_matrix(H: AndersonHamiltonian, z: float, es: Eigensystem | None = None) -> np.ndarray:
    """Resolvent (H - z)^-1 as a dense symmetric matrix."""
    if es is None:
        es = eigensystem(H)
    return es.green(float(z))


@dataclass(frozen=True)
class DefectReport:
    lam: float
    defect: float
    bound: float
    box_bound: float | None
    spectral_distance: float
    off_support: float
    max_contacts: int
    bound_applicable: bool
    slack: float

    def holds(self) -> bool:
        """Spectral distance <= defect <= bound, up to slack.

        When some exterior site touches the inner region 2d times the
        (2d - 1) prefactor does not apply and only the first inequality
        is required.
        """
        ok = self.spectral_distance <= self.defect + self.slack
        if self.bound_applicable:
            ok = ok and self.defect <= self.bound + self.slack
        if self.box_bound is not None:
            ok = ok and self.defect <= self.box_bound + self.slack
        return bool(ok)


def defect(
    phi: np.ndarray,
    lam: float,
    inner: Region,
    H_outer: AndersonHamiltonian,
    eigenvalues: np.ndarray | None = None,
) -> DefectReport:
    """How far a normalized vector on ``inner`` is from being an eigenvector of
    the operator on the larger region ``H_outer.region``."""
    phi = np.asarray(phi, dtype=np.float64)
    outer = H_outer.region
    if phi.shape != (len(inner),):
        raise InvalidArgument("phi must have one entry per inner site")
    if abs(np.linalg.norm(phi) - 1.0) > 1e-8:
        raise InvalidArgument("phi is not normalized")
    if not inner.issubset(outer):
        raise InvalidArgument("inner region is not contained in the outer region")
    rows = outer.rows_of(inner)
    ext = np.zeros(len(outer))
    ext[rows] = phi
    r = H_outer.matrix @ ext - lam * ext
    bd = boundaries(inner, outer)
    on_ext = np.zeros(len(outer), dtype=bool)
    if len(bd.exterior):
        on_ext[outer.rows_of(bd.exterior)] = True
    off = float(np.abs(r[~on_ext]).max(initial=0.0))
    sup_in = float(np.abs(phi[inner.rows_of(bd.interior)]).max(initial=0.0)) if len(bd.interior) else 0.0
    d = outer.d
    eps = H_outer.eps
    bound = (2 * d - 1) * eps * math.sqrt(len(bd.exterior)) * sup_in
    box_bound = None
    if inner.box is not None and inner.box.side >= 2:
        L = float(inner.box.side)
        box_bound = eps * math.sqrt(2**d * d) * L ** ((d - 1) / 2) * sup_in
    if eigenvalues is None:
        eigenvalues = np.linalg.eigvalsh(H_outer.matrix)
    sd = float(np.abs(np.asarray(eigenvalues) - lam).min())
    return DefectReport(
        lam=float(lam),
        defect=float(np.linalg.norm(r)),
        bound=float(bound),
        box_bound=box_bound,
        spectral_distance=sd,
        off_support=off,
        max_contacts=bd.max_contacts,
        bound_applicable=bd.max_contacts <= 2 * d - 1,
        slack=bound_slack(H_outer.norm_bound),
    )


@dataclass(frozen=True)
class AlignmentReport:
    index: int
    mu: float
    delta: float
    eta: float
    overlap: float
    perp_norm: float
    aligned_distance: float
    applicable: bool
    slack: float

    @property
    def perp_bound(self) -> float:
        return math.sqrt(2) * self.delta / self.eta

    @property
    def aligned_bound(self) -> float:
        return 1.5 * self.delta / self.eta

    def holds(self) -> bool | None:
        """None when the gap hypothesis fails, else whether both bounds hold."""
        if not self.applicable:
            return None
        return bool(
            self.perp_norm <= self.perp_bound + self.slack
            and self.aligned_distance <= self.aligned_bound + self.slack
        )


def align_eigenpair(phi: np.ndarray, lam: float, H: AndersonHamiltonian, es: Eigensystem | None = None) -> AlignmentReport:
    """Compare an approximate eigenpair with the nearest true eigenpair."""
    if es is None:
        es = eigensystem(H)
    phi = np.asarray(phi, dtype=np.float64)
    if abs(np.linalg.norm(phi) - 1.0) > 1e-8:
        raise InvalidArgument("phi is not normalized")
    dist = np.abs(es.values - lam)
    mu = int(np.argmin(dist))
    if es.n > 1:
        rest = np.delete(dist, mu)
        if rest.min() - dist[mu] <= NEAR_SINGULAR * max(1.0, es.hnorm):
            raise AmbiguousNearest(f"two eigenvalues are equally close to {lam!r}")
        eta = float(np.abs(np.delete(es.values, mu) - es.values[mu]).min())
    else:
        eta = math.inf
    psi = es.vectors[:, mu]
    delta = float(np.linalg.norm(H.matrix @ phi - lam * phi))
    c = float(psi @ phi)
    perp = float(np.linalg.norm(phi - c * psi))
    hat = phi if c >= 0 else -phi
    aligned = float(np.linalg.norm(hat - psi))
    applicable = 4 * delta < eta and abs(lam - es.values[mu]) <= delta
    return AlignmentReport(mu, float(es.values[mu]), delta, eta, c, perp, aligned, applicable, bound_slack(es.hnorm))


def reference_m1(m: float, ell: float, tau: float, C: float = 1.0) -> float:
    return m * (1.0 - C * math.log(ell) / ell**tau)


@dataclass(frozen=True)
class LiftEntry:
    site: tuple
    sub_index: int
    big_index: int
    eigenvalue_distance: float
    vector_distance: float


@dataclass(frozen=True)
class LiftReport:
    entries: tuple
    injective: bool
    ell_tau: int
    m1: float
    eigenvalue_bound: float
    vector_bound: float
    eigenvalue_violations: int
    vector_violations: int

    @property
    def ok(self) -> bool:
        return self.injective and self.eigenvalue_violations == 0 and self.vector_violations == 0


def lift_eigenpairs(
    sub: Eigensystem,
    labeling,
    big_H: AndersonHamiltonian,
    big: Eigensystem,
    tau: float,
    beta: float,
    m: float,
    L: float,
    C: float = 1.0,
) -> LiftReport:
    """Map labeled eigenpairs of a sub-box to nearby eigenpairs of the big region.

    ``labeling[i]`` is the eigenvector index assigned to the i-th site of the
    sub-box.  Only sites deep inside the big region (depth > floor(ell^tau))
    are lifted.
    """
    from .certify import is_level_spacing

    box = sub.region.box
    if box is None:
        raise InvalidArgument("sub eigensystem must live on a box")
    if not sub.region.issubset(big.region):
        raise InvalidArgument("sub-box is not contained in the big region")
    if not is_level_spacing(big, L, beta):
        raise PreconditionViolated("big region is not level spacing")
    labeling = np.asarray(labeling, dtype=np.int64)
    ell = float(box.side)
    ell_tau = floor_power(ell, tau)
    deep, _, _ = interior(sub.region, big.region, ell_tau)
    rows_big = big.region.rows_of(sub.region)
    m1 = reference_m1(m, ell, tau, C)
    b1 = math.exp(-m1 * ell_tau)
    b2 = 2.0 * b1 * math.exp(float(L) ** beta)
    slack = bound_slack(big.hnorm)
    entries = []
    for site in deep.sites:
        i = sub.region.row(site)
        j = int(labeling[i])
        lam = sub.values[j]
        k = int(np.argmin(np.abs(big.values - lam)))
        phi = np.zeros(big.n)
        phi[rows_big] = sub.vectors[:, j]
        psi = big.vectors[:, k]
        if psi @ phi < 0:
            psi = -psi
        entries.append(LiftEntry(site, j, k, float(abs(big.values[k] - lam)), float(np.linalg.norm(psi - phi))))
    targets = [e.big_index for e in entries]
    return LiftReport(
        entries=tuple(entries),
        injective=len(set(targets)) == len(targets),
        ell_tau=ell_tau,
        m1=m1,
        eigenvalue_bound=b1,
        vector_bound=b2,
        eigenvalue_violations=sum(e.eigenvalue_distance > b1 + slack for e in entries),
        vector_violations=sum(e.vector_distance > b2 + slack for e in entries),
    )
