"""Anderson Hamiltonians and seeded random potentials."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _core
from .errors import InvalidArgument
from .lattice import Region

__all__ = [
    "DEFAULT_SITE_CAP",
    "SingleSiteDistribution",
    "Potential",
    "AndersonHamiltonian",
    "AndersonModel",
    "sample_potential",
    "sample_potential_block",
    "hamiltonian",
    "hamiltonian_batch",
    "decompose",
    "reassemble",
    "concentration_function",
    "laplacian",
]

DEFAULT_SITE_CAP = 4096


@dataclass(frozen=True)
class SingleSiteDistribution:
    """Bounded single-site law with its Hoelder data (alpha, K).

    Use the ``uniform``, ``discrete`` and ``custom`` constructors.  Discrete
    laws are not Hoelder continuous and carry ``alpha=None``.
    """

    kind: str
    low: float
    high: float
    alpha: float | None
    K: float | None
    atoms: tuple = ()
    probs: tuple = ()
    quantile: Callable | None = field(default=None, compare=False, repr=False)
    concentration: Callable | None = field(default=None, compare=False, repr=False)

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 1.0) -> "SingleSiteDistribution":
        low, high = float(low), float(high)
        if not (math.isfinite(low) and math.isfinite(high)) or high <= low:
            raise InvalidArgument(f"uniform support [{low}, {high}] is degenerate or unbounded")
        return cls("uniform", low, high, 1.0, 1.0 / (high - low))

    @classmethod
    def discrete(cls, atoms, probs=None) -> "SingleSiteDistribution":
        atoms = [float(a) for a in atoms]
        if probs is None:
            probs = [1.0 / len(atoms)] * len(atoms) if atoms else []
        probs = [float(p) for p in probs]
        if len(atoms) != len(probs):
            raise InvalidArgument("atoms and probs differ in length")
        if any(p < 0 for p in probs) or not math.isclose(sum(probs), 1.0, rel_tol=1e-12, abs_tol=1e-12):
            raise InvalidArgument("probs must be nonnegative and sum to 1")
        merged = {}
        for a, p in zip(atoms, probs):
            if p > 0:
                merged[a] = merged.get(a, 0.0) + p
        if len(merged) < 2:
            raise InvalidArgument("discrete distribution is degenerate (fewer than two atoms)")
        keys = sorted(merged)
        return cls("discrete", keys[0], keys[-1], None, None, tuple(keys), tuple(merged[k] for k in keys))

    @classmethod
    def custom(cls, quantile, low, high, alpha, K, concentration=None) -> "SingleSiteDistribution":
        """A truncated law given by its quantile function on [0, 1)."""
        low, high = float(low), float(high)
        if high <= low:
            raise InvalidArgument("custom support is degenerate")
        if not (0.5 < alpha <= 1) or K <= 0:
            raise InvalidArgument("custom law needs alpha in (1/2, 1] and K > 0")
        return cls("custom", low, high, float(alpha), float(K), quantile=quantile, concentration=concentration)

    @property
    def holder(self) -> bool:
        return self.alpha is not None and self.alpha > 0.5

    @property
    def K_tilde(self) -> float | None:
        if not self.holder:
            return None
        return self.K if self.alpha == 1 else 8 * self.K

    @property
    def diameter(self) -> float:
        return self.high - self.low

    def ppf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "uniform":
            return self.low + (self.high - self.low) * u
        if self.kind == "discrete":
            cdf = np.cumsum(self.probs)
            cdf[-1] = 1.0
            idx = np.searchsorted(cdf, u, side="right")
            return np.asarray(self.atoms)[np.minimum(idx, len(self.atoms) - 1)]
        out = np.asarray(self.quantile(u), dtype=np.float64)
        return np.clip(out, self.low, self.high)

    def describe(self) -> dict:
        out = {"kind": self.kind, "low": self.low, "high": self.high, "alpha": self.alpha, "K": self.K}
        if self.kind == "discrete":
            out["atoms"] = list(self.atoms)
            out["probs"] = list(self.probs)
        return out


def concentration_function(dist: SingleSiteDistribution, t: float) -> tuple:
    """(S(t), Q(t)): largest mass of a length-t interval, and its Minami variant."""
    t = float(t)
    if t < 0:
        raise InvalidArgument("t must be nonnegative")
    if dist.kind == "uniform":
        s = min(t / (dist.high - dist.low), 1.0)
    elif dist.kind == "discrete":
        atoms = np.asarray(dist.atoms)
        cum = np.concatenate([[0.0], np.cumsum(dist.probs)])
        right = np.searchsorted(atoms, atoms + t, side="right")
        s = float(min(1.0, (cum[right] - cum[np.arange(len(atoms))]).max()))
    elif dist.concentration is not None:
        s = float(dist.concentration(t))
    else:
        raise NotImplementedError(f"no concentration function for kind {dist.kind!r}")
    if dist.alpha == 1:
        q = s
    elif dist.holder:
        q = 8 * s
    else:
        q = s
    return s, q


@dataclass(frozen=True)
class Potential:
    region: Region
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != (len(self.region),):
            raise InvalidArgument("potential needs exactly one value per site")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def restrict(self, sub: Region) -> "Potential":
        return Potential(sub, self.values[self.region.rows_of(sub)])

    def __getitem__(self, site) -> float:
        return float(self.values[self.region.row(site)])


@dataclass(frozen=True)
class AndersonModel:
    """Dimension, hopping strength and single-site law of a random family."""

    d: int
    eps: float
    dist: SingleSiteDistribution

    def __post_init__(self):
        if int(self.d) < 1:
            raise InvalidArgument("dimension must be positive")
        if not (float(self.eps) >= 0):
            raise InvalidArgument("eps must be nonnegative")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "eps", float(self.eps))


def sample_potential(region: Region, dist: SingleSiteDistribution, master_seed: int, trial_index: int, stream: int = 0) -> Potential:
    if len(region) == 0:
        raise InvalidArgument("cannot sample on an empty region")
    vals = sample_potential_block(len(region), dist, master_seed, [trial_index], stream)[0]
    return Potential(region, vals)


def sample_potential_block(n_sites: int, dist, master_seed: int, trials, stream: int = 0) -> np.ndarray:
    """Potential values for several trials at once, shape (len(trials), n_sites).

    Row t equals ``sample_potential(..., trial_index=trials[t]).values``.
    """
    trials = np.asarray(trials, dtype=np.int64)
    if (trials < 0).any():
        raise InvalidArgument("trial indices must be nonnegative")
    u = _core.counter_uniform(int(master_seed), trials, int(n_sites), int(stream))
    return dist.ppf(u)


def laplacian(region: Region) -> np.ndarray:
    """Adjacency matrix of nearest neighbours inside ``region``."""
    n = len(region)
    a = np.zeros((n, n), dtype=np.float64)
    p = region.neighbor_pairs
    a[p[:, 0], p[:, 1]] = 1.0
    a[p[:, 1], p[:, 0]] = 1.0
    return a


@dataclass(frozen=True)
class AndersonHamiltonian:
    region: Region
    eps: float
    potential: Potential
    matrix: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.region.d

    @property
    def n(self) -> int:
        return len(self.region)

    @property
    def norm_bound(self) -> float:
        """Cheap upper bound on the operator norm."""
        v = self.potential.values
        return float(np.abs(v).max(initial=0.0) + 2 * self.d * self.eps)

    def restrict(self, sub: Region) -> "AndersonHamiltonian":
        """The operator on a subregion, with the same potential values."""
        if not sub.issubset(self.region):
            raise InvalidArgument("subregion is not contained in the region")
        return hamiltonian(sub, self.eps, self.potential.restrict(sub))


def hamiltonian(region: Region, eps: float, potential: Potential, site_cap: int = DEFAULT_SITE_CAP) -> AndersonHamiltonian:
    eps = float(eps)
    if not eps >= 0:
        raise InvalidArgument("eps must be nonnegative")
    if potential.region != region:
        raise InvalidArgument("potential is defined on a different region")
    if len(region) > site_cap:
        raise InvalidArgument(f"region has {len(region)} sites, above the cap of {site_cap}")
    h = -eps * laplacian(region)
    h[np.diag_indices_from(h)] = potential.values
    h.setflags(write=False)
    return AndersonHamiltonian(region, eps, potential, h)


def hamiltonian_batch(region: Region, eps: float, values: np.ndarray) -> np.ndarray:
    """Stacked dense matrices for a block of potentials, shape (T, n, n)."""
    values = np.asarray(values, dtype=np.float64)
    base = -float(eps) * laplacian(region)
    h = np.broadcast_to(base, (values.shape[0],) + base.shape).copy()
    idx = np.arange(base.shape[0])
    h[:, idx, idx] = values
    return h


def decompose(H: AndersonHamiltonian, phi: Region) -> tuple:
    """Split H on Theta as H_phi (+) H_rest + eps * Gamma.

    Returns ``(H_phi, H_rest, gamma)`` where ``gamma`` is a |Theta| x |Theta|
    matrix with -1 at each boundary edge between ``phi`` and its complement.
    """
    theta = H.region
    if not phi.issubset(theta):
        raise InvalidArgument("phi is not contained in theta")
    rest = theta.difference(phi)
    h_phi = H.restrict(phi)
    h_rest = H.restrict(rest) if len(rest) else None
    inside = np.zeros(len(theta), dtype=bool)
    inside[theta.rows_of(phi)] = True
    gamma = np.zeros_like(H.matrix)
    p = theta.neighbor_pairs
    cross = p[inside[p[:, 0]] != inside[p[:, 1]]]
    gamma[cross[:, 0], cross[:, 1]] = -1.0
    gamma[cross[:, 1], cross[:, 0]] = -1.0
    return h_phi, h_rest, gamma


def reassemble(H: AndersonHamiltonian, phi: Region, h_phi, h_rest, gamma) -> np.ndarray:
    """Inverse of :func:`decompose`, embedded in the row order of H."""
    theta = H.region
    out = H.eps * gamma.copy()
    r = theta.rows_of(phi)
    out[np.ix_(r, r)] += h_phi.matrix
    if h_rest is not None:
        q = theta.rows_of(h_rest.region)
        out[np.ix_(q, q)] += h_rest.matrix
    return out
