"""Seeded Monte Carlo estimates of the probabilities bounded by the theory.

Every trial draws its potential from the counter-based generator keyed by
``(master_seed, trial_index, stream)``, so results do not depend on how
trials are chunked or how many worker processes run them.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .certify import certify_m_localizing, level_spacing_values
from .errors import InvalidArgument
from .lattice import Box, Region, as_rational, box_sites
from .model import AndersonModel, concentration_function, hamiltonian, hamiltonian_batch, sample_potential, sample_potential_block, DEFAULT_SITE_CAP

__all__ = [
    "McEstimate",
    "MinamiReport",
    "ScaleSequence",
    "ScanRow",
    "wilson_interval",
    "compare_to_bound",
    "run_chunked",
    "rational_round",
    "localizing_bound",
    "level_spacing_bound",
    "klm_bound",
    "klm_windows",
    "mc_localizing_probability",
    "mc_level_spacing_probability",
    "klm_event_probability",
    "minami_empirical",
    "scale_sequence",
    "msa_scan",
]

Z95 = 1.959963984540054
CHUNK = 256


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple:
    if trials <= 0:
        raise InvalidArgument("trials must be positive")
    p = successes / trials
    z2 = z * z
    denom = 1 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    return max(0.0, min(p, center - half)), min(1.0, max(p, center + half))


def compare_to_bound(bound: float | None, low: float, high: float) -> str:
    """Verdict for a claimed lower bound on a probability.

    Consistent when the whole interval clears the bound (or the bound is
    vacuous), violated when the whole interval lies below it.
    """
    if bound is None or not math.isfinite(bound):
        return "inconclusive"
    if bound <= 0 or low >= bound:
        return "consistent"
    if high < bound:
        return "bound-violated"
    return "inconclusive"


@dataclass(frozen=True)
class McEstimate:
    trials: int
    successes: int
    estimate: float
    wilson_low: float
    wilson_high: float
    bound: float | None
    verdict: str
    details: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_counts(cls, successes: int, trials: int, bound: float | None, details=None) -> "McEstimate":
        lo, hi = wilson_interval(successes, trials)
        return cls(trials, successes, successes / trials, lo, hi, bound, compare_to_bound(bound, lo, hi), dict(details or {}))

    @property
    def standard_error(self) -> float:
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.trials)

    @property
    def failure_rate(self) -> float:
        return 1.0 - self.estimate


def run_chunked(task, trials: int, workers: int = 1, chunk: int = CHUNK) -> list:
    """Evaluate ``task(start, stop)`` over fixed chunks of trial indices, in order."""
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    starts = list(range(0, trials, chunk))
    stops = [min(s + chunk, trials) for s in starts]
    if workers <= 1 or len(starts) == 1:
        return [task(a, b) for a, b in zip(starts, stops)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, starts, stops))


def rational_round(x, places: int = 6) -> Fraction:
    """Nearest rational with denominator 10**places."""
    if isinstance(x, Fraction):
        return x
    scale = 10**places
    return Fraction(round(float(x) * scale), scale)


def _box_site_count(box: Box) -> int:
    n = 1
    for lo, hi in box.ranges():
        n *= max(0, hi - lo + 1)
    return n


# ---------------------------------------------------------------- bounds


def localizing_bound(model: AndersonModel, L, beta: float) -> float | None:
    """1 - K/2 (L+1)^{2d} (8 d eps + 2 exp(-L^beta))^alpha."""
    dist = model.dist
    if not dist.holder:
        return None
    L = float(L)
    d = model.d
    base = 8 * d * model.eps + 2 * math.exp(-(L**beta))
    return 1 - 0.5 * dist.K * (L + 1) ** (2 * d) * base**dist.alpha


def level_spacing_bound(model: AndersonModel, n_sites: int, L, beta: float, eps0: float | None = None) -> float | None:
    dist = model.dist
    if not dist.holder:
        return None
    a = dist.alpha
    eps0 = model.eps if eps0 is None else float(eps0)
    Y = 2 ** (2 * a - 1) * dist.K_tilde**2 * (dist.diameter + 2 * model.d * eps0 + 1)
    return 1 - Y * math.exp(-(2 * a - 1) * float(L) ** beta) * n_sites**2


def klm_bound(model: AndersonModel, n_sites: int, length: float, eta: float) -> float | None:
    dist = model.dist
    if not dist.holder:
        return None
    return 1 - dist.K_tilde**2 * (length + 1) * (2 * eta) ** (2 * dist.alpha - 1) * n_sites**2


def klm_windows(lo: float, hi: float, eta: float) -> np.ndarray:
    """Left ends of the 2*ceil(|I|/(2 eta)) windows of length 2 eta, offset by eta."""
    count = 2 * math.ceil((hi - lo) / (2 * eta))
    return lo + eta * np.arange(count, dtype=np.float64)


# ---------------------------------------------------------------- tasks


@dataclass(frozen=True)
class _LocalizingTask:
    model: AndersonModel
    side: Fraction
    m: float
    beta: float
    tau: float
    seed: int
    stream: int

    def __call__(self, start, stop):
        region = box_sites(Box.centered(self.model.d, self.side))
        out = np.zeros((stop - start, 2), dtype=np.int64)
        for i, t in enumerate(range(start, stop)):
            V = sample_potential(region, self.model.dist, self.seed, t, self.stream)
            H = hamiltonian(region, self.model.eps, V)
            cert = certify_m_localizing(H, self.m, beta=self.beta, tau=self.tau)
            out[i] = (cert.level_spacing, cert.matching is not None)
        return out


@dataclass(frozen=True)
class _SpectrumTask:
    """Sorted eigenvalues for a block of trials on a fixed region."""

    model: AndersonModel
    coords: bytes
    n_sites: int
    seed: int
    stream: int = 0

    def region(self) -> Region:
        arr = np.frombuffer(self.coords, dtype=np.int64).reshape(self.n_sites, self.model.d)
        return Region(arr, d=self.model.d)

    def __call__(self, start, stop):
        region = self.region()
        V = sample_potential_block(self.n_sites, self.model.dist, self.seed, np.arange(start, stop), self.stream)
        if self.model.eps == 0:
            return np.sort(V, axis=1)
        return np.linalg.eigvalsh(hamiltonian_batch(region, self.model.eps, V))


def _spectra(model, region: Region, trials, seed, workers, stream=0) -> np.ndarray:
    if len(region) == 0:
        raise InvalidArgument("region is empty")
    task = _SpectrumTask(model, region.coords.tobytes(), len(region), int(seed), int(stream))
    return np.vstack(run_chunked(task, trials, workers))


# ---------------------------------------------------------------- estimators


def mc_localizing_probability(
    model: AndersonModel,
    L,
    m: float,
    params=None,
    trials: int = 100,
    master_seed: int = 0,
    *,
    beta: float | None = None,
    tau: float | None = None,
    xi: float | None = None,
    workers: int = 1,
    stream: int = 0,
) -> McEstimate:
    """Fraction of trials in which the centered box of side L is m-localizing."""
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    if params is not None:
        beta = params.beta if beta is None else beta
        tau = params.tau if tau is None else tau
        xi = params.xi if xi is None else xi
    if beta is None or tau is None:
        raise InvalidArgument("beta and tau are required")
    side = rational_round(L) if not isinstance(L, (int, Fraction)) else as_rational(L)
    task = _LocalizingTask(model, side, float(m), float(beta), float(tau), int(master_seed), int(stream))
    res = np.vstack(run_chunked(task, trials, workers))
    ok = res[:, 0].astype(bool) & res[:, 1].astype(bool)
    details = {
        "L": side,
        "sites": len(box_sites(Box.centered(model.d, side))),
        "level_spacing_failures": int((res[:, 0] == 0).sum()),
        "matching_failures": int((res[:, 1] == 0).sum()),
    }
    if xi is not None:
        details["target"] = 1 - math.exp(-(float(side) ** xi))
    return McEstimate.from_counts(int(ok.sum()), trials, localizing_bound(model, side, beta), details)


def mc_level_spacing_probability(
    model: AndersonModel,
    theta: Region,
    L,
    beta: float,
    trials: int = 100,
    master_seed: int = 0,
    *,
    eps0: float | None = None,
    workers: int = 1,
) -> McEstimate:
    """Fraction of trials in which ``theta`` is L-level spacing."""
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    ev = _spectra(model, theta, trials, master_seed, workers)
    ok = level_spacing_values(ev, L, beta)
    bound = level_spacing_bound(model, len(theta), L, beta, eps0)
    return McEstimate.from_counts(int(ok.sum()), trials, bound, {"sites": len(theta)})


def klm_event_probability(
    model: AndersonModel,
    theta: Region,
    interval,
    eta: float,
    trials: int = 100,
    master_seed: int = 0,
    *,
    workers: int = 1,
) -> McEstimate:
    """Probability that every window of the covering family holds at most one eigenvalue.

    The windows have length 2 eta and start at lo + k eta; any subinterval
    of I of length at most eta lies in one of them.  ``details`` also
    reports the exact event (no two eigenvalues in I within eta).
    """
    lo, hi = (float(v) for v in interval)
    if not (0 < eta <= 0.5):
        raise InvalidArgument("eta must lie in (0, 1/2]")
    if hi < lo:
        raise InvalidArgument("interval is reversed")
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    ev = _spectra(model, theta, trials, master_seed, workers)
    starts = klm_windows(lo, hi, eta)
    ends = starts + 2 * eta
    ok = np.ones(trials, dtype=bool)
    exact = np.ones(trials, dtype=bool)
    for t in range(trials):
        e = ev[t]
        counts = np.searchsorted(e, ends, side="right") - np.searchsorted(e, starts, side="left")
        ok[t] = counts.max(initial=0) <= 1
        inside = e[(e >= lo) & (e <= hi)]
        exact[t] = inside.size < 2 or np.diff(inside).min() > eta
    bound = klm_bound(model, len(theta), hi - lo, eta)
    details = {"windows": int(starts.size), "exact_event_successes": int(exact.sum())}
    return McEstimate.from_counts(int(ok.sum()), trials, bound, details)


@dataclass(frozen=True)
class MinamiReport:
    trials: int
    moment: float
    standard_error: float
    bound: float
    prob_two_or_more: float

    @property
    def within_bound(self) -> bool:
        return self.moment <= self.bound


def minami_empirical(model: AndersonModel, theta: Region, interval, trials: int = 100, master_seed: int = 0, *, workers: int = 1) -> MinamiReport:
    """Sample mean of N(N-1), N the number of eigenvalues in the closed interval J."""
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    lo, hi = (float(v) for v in interval)
    _, q = concentration_function(model.dist, max(hi - lo, 0.0))
    bound = (q * len(theta)) ** 2
    if hi < lo:
        return MinamiReport(trials, 0.0, 0.0, 0.0, 0.0)
    ev = _spectra(model, theta, trials, master_seed, workers)
    n = ((ev >= lo) & (ev <= hi)).sum(axis=1).astype(np.float64)
    f = n * (n - 1)
    se = float(f.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MinamiReport(trials, float(f.mean()), se, bound, float((n >= 2).mean()))


# ---------------------------------------------------------------- scales


@dataclass(frozen=True)
class ScaleSequence:
    L0: float
    gamma: float
    log_scales: tuple
    masses: tuple
    truncated: bool

    @property
    def scales(self) -> tuple:
        # the logs only guard against overflow; powers keep L_0 exact
        return tuple(self.L0 ** (self.gamma**k) for k in range(len(self.log_scales)))


def scale_sequence(L0: float, gamma: float, k_max: int, m0: float | None = None) -> ScaleSequence:
    """L_k = L0^(gamma^k) for k = 0..k_max, computed as logs."""
    L0, gamma = float(L0), float(gamma)
    if not L0 > 1:
        raise InvalidArgument("L0 must exceed 1")
    if not gamma > 1:
        raise InvalidArgument("gamma must exceed 1")
    if k_max < 0:
        raise InvalidArgument("k_max must be nonnegative")
    limit = math.log(np.finfo(np.float64).max)
    logs = []
    truncated = False
    for k in range(k_max + 1):
        x = math.log(L0) * gamma**k
        if not math.isfinite(x) or x >= limit:
            truncated = True
            break
        logs.append(x)
    masses = tuple((m0 / 2) if m0 is not None else math.nan for _ in logs)
    return ScaleSequence(L0, gamma, tuple(logs), masses, truncated)


@dataclass(frozen=True)
class ScanRow:
    k: int
    L: float
    side: Fraction
    sites: int
    mass: float
    skipped: bool
    estimate: McEstimate | None
    zeta_target: float
    xi_target: float

    @property
    def meets_zeta(self) -> bool | None:
        if self.estimate is None:
            return None
        return 1 - self.estimate.wilson_low <= self.zeta_target

    @property
    def meets_xi(self) -> bool | None:
        if self.estimate is None:
            return None
        return 1 - self.estimate.wilson_low <= self.xi_target


def msa_scan(
    model: AndersonModel,
    params,
    L0: float,
    k_max: int,
    m0: float,
    trials: int,
    master_seed: int = 0,
    *,
    site_cap: int = DEFAULT_SITE_CAP,
    workers: int = 1,
) -> list:
    """Localization frequency at each scale L_k with target mass m0/2.

    Failure rates are compared with exp(-L^zeta) and exp(-L^xi).
    """
    seq = scale_sequence(L0, params.gamma, k_max)
    rows = []
    for k, L in enumerate(seq.scales):
        side = rational_round(L)
        mass = m0 / 2
        n = _box_site_count(Box.centered(model.d, side))
        est = None
        if n <= site_cap:
            est = mc_localizing_probability(
                model, side, mass, params, trials, master_seed, workers=workers, stream=k
            )
        rows.append(
            ScanRow(k, L, side, n, mass, est is None, est, math.exp(-(L**params.zeta)), math.exp(-(L**params.xi)))
        )
    return rows
