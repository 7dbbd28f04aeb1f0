"""Experiment registry shared by the CLI subcommands and config-driven runs.

Each experiment declares its options once; a runner turns an option dict
into result rows (one per trial, center, scale or aggregate) plus a
summary.  Rows echo every input that affects the numbers, so a single row
is enough to reproduce it.  The worker count is deliberately not echoed:
it never changes results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from . import __version__
from .certify import (
    certify_m_localizing,
    initial_mass,
    reference_decay_rates,
    validate_scale_params,
)
from .errors import InvalidArgument
from .green import (
    localizing_implies_regular_experiment,
    regular_implies_localizing_experiment,
    wegner_empirical,
)
from .lattice import Box, as_rational, box_sites, check_cover, suitable_cover
from .model import AndersonModel, SingleSiteDistribution, hamiltonian, sample_potential
from .probability import (
    klm_event_probability,
    mc_level_spacing_probability,
    mc_localizing_probability,
    minami_empirical,
    msa_scan,
)

__all__ = ["Option", "Experiment", "EXPERIMENTS", "COMMON", "MODEL", "resolve", "run_experiment"]

AUTO = "auto"


@dataclass(frozen=True)
class Option:
    key: str
    kind: str  # int | float | auto | str | rational
    default: object
    help: str = ""
    choices: tuple = ()


COMMON = (
    Option("seed", "int", 0, "master seed of the counter-based generator"),
    Option("trials", "int", 1, "number of trials"),
)

MODEL = (
    Option("d", "int", 1, "lattice dimension"),
    Option("eps", "auto", AUTO, "hopping strength; auto = exp(-L^beta)/(8d)"),
    Option("dist", "str", "uniform", "single-site law", ("uniform", "discrete")),
    Option("low", "float", 0.0, "uniform support lower end"),
    Option("high", "float", 1.0, "uniform support upper end"),
    Option("atoms", "str", "0,1", "discrete atoms, comma separated (equal weights)"),
)


def _coerce(opt: Option, value):
    if value is None:
        return None
    if opt.kind == "int":
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise InvalidArgument(f"{opt.key}: expected an integer")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise InvalidArgument(f"{opt.key}: expected an integer") from None
    if opt.kind == "auto":
        if isinstance(value, str) and value.strip().lower() == AUTO:
            return AUTO
    if opt.kind in ("float", "auto"):
        if isinstance(value, bool):
            raise InvalidArgument(f"{opt.key}: expected a number")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise InvalidArgument(f"{opt.key}: expected a number") from None
    if opt.kind == "rational":
        try:
            return as_rational(value)
        except InvalidArgument:
            raise InvalidArgument(f"{opt.key}: expected a rational number") from None
    if opt.kind == "str":
        value = str(value)
        if opt.choices and value not in opt.choices:
            raise InvalidArgument(f"{opt.key}: expected one of {', '.join(opt.choices)}")
        return value
    raise AssertionError(opt.kind)


@dataclass(frozen=True)
class Experiment:
    name: str
    options: tuple
    runner: object
    uses_model: bool = True
    doc: str = ""

    def all_options(self) -> tuple:
        return COMMON + (MODEL if self.uses_model else ()) + self.options

    def defaults(self) -> dict:
        return {o.key: o.default for o in self.all_options()}


def resolve(exp: Experiment, values: dict) -> dict:
    """Merge ``values`` over the defaults, coercing types; unknown keys fail."""
    opts = {o.key: o for o in exp.all_options()}
    unknown = sorted(set(values) - set(opts))
    if unknown:
        raise InvalidArgument(f"unknown option(s) for {exp.name}: {', '.join(unknown)}")
    out = {}
    for key, opt in opts.items():
        out[key] = _coerce(opt, values.get(key, opt.default))
    if out["trials"] is not None and out["trials"] < 1:
        raise InvalidArgument("trials: must be at least 1")
    return out


def _dist(o) -> SingleSiteDistribution:
    if o["dist"] == "uniform":
        return SingleSiteDistribution.uniform(o["low"], o["high"])
    try:
        atoms = [float(a) for a in str(o["atoms"]).split(",") if a.strip()]
    except ValueError:
        raise InvalidArgument("atoms: expected comma separated numbers") from None
    return SingleSiteDistribution.discrete(atoms)


def _eps(o, L, beta) -> float:
    if o["eps"] == AUTO:
        return math.exp(-(float(L) ** beta)) / (8 * o["d"])
    if o["eps"] < 0:
        raise InvalidArgument("eps: must be nonnegative")
    return o["eps"]


def _model(o, L, beta) -> AndersonModel:
    return AndersonModel(o["d"], _eps(o, L, beta), _dist(o))


def _mass(o, key, eps, L, beta, d) -> float:
    if o[key] == AUTO:
        return initial_mass(eps, L, beta, d)
    return o[key]


def _echo(o, exp: Experiment) -> dict:
    row = {"experiment": exp.name, "version": __version__}
    for opt in exp.all_options():
        row[opt.key] = o[opt.key]
    return row


def _mc_fields(est) -> dict:
    return {
        "trials_run": est.trials,
        "successes": est.successes,
        "estimate": est.estimate,
        "wilson_low": est.wilson_low,
        "wilson_high": est.wilson_high,
        "standard_error": est.standard_error,
        "bound": est.bound,
        "verdict": est.verdict,
    }


# ---------------------------------------------------------------- runners


def _run_certify(o, exp, workers):
    model = _model(o, o["L"], o["beta"])
    region = box_sites(Box.centered(model.d, o["L"]))
    m = _mass(o, "m", model.eps, o["L"], o["beta"], model.d)
    rows = []
    for t in range(o["trials"]):
        V = sample_potential(region, model.dist, o["seed"], t)
        cert = certify_m_localizing(hamiltonian(region, model.eps, V), m, beta=o["beta"], tau=o["tau"])
        row = _echo(o, exp)
        row.update({"trial": t, "eps_used": model.eps, "m_used": m, "sites": len(region)})
        row.update(cert.summary())
        rows.append(row)
    summary = {"certified": sum(r["verdict"] for r in rows), "trials": len(rows)}
    return rows, summary, False


def _run_cover(o, exp, workers):
    parent = Box.centered(o["d"], o["L"])
    cover = suitable_cover(parent, o["ell"])
    inv = check_cover(cover)
    rows = []
    for i, c in enumerate(cover.centers):
        row = _echo(o, exp)
        row.update({"rho": cover.rho, "k": cover.k, "center_index": i, "center": c})
        row.update(inv)
        rows.append(row)
    return rows, dict(inv, rho=cover.rho, k=cover.k), False


def _run_mc_localizing(o, exp, workers):
    model = _model(o, o["L"], o["beta"])
    m = _mass(o, "m", model.eps, o["L"], o["beta"], model.d)
    est = mc_localizing_probability(
        model, o["L"], m, trials=o["trials"], master_seed=o["seed"], beta=o["beta"], tau=o["tau"], xi=o["xi"], workers=workers
    )
    row = _echo(o, exp)
    row.update({"eps_used": model.eps, "m_used": m})
    row.update(_mc_fields(est))
    row.update({k: est.details.get(k) for k in ("sites", "level_spacing_failures", "matching_failures", "target")})
    return [row], _mc_fields(est), est.verdict == "bound-violated"


def _run_mc_spacing(o, exp, workers):
    R = o["R"] if o["R"] is not None else o["L"]
    model = _model(o, R, o["beta"])
    theta = box_sites(Box.centered(model.d, o["L"]))
    est = mc_level_spacing_probability(model, theta, R, o["beta"], o["trials"], o["seed"], eps0=o["eps0"], workers=workers)
    row = _echo(o, exp)
    row.update({"eps_used": model.eps, "R_used": R, "sites": len(theta)})
    row.update(_mc_fields(est))
    return [row], _mc_fields(est), est.verdict == "bound-violated"


def _run_klm(o, exp, workers):
    model = _model(o, o["L"], 0.8)
    theta = box_sites(Box.centered(model.d, o["L"]))
    est = klm_event_probability(model, theta, (o["I_lo"], o["I_hi"]), o["eta"], o["trials"], o["seed"], workers=workers)
    row = _echo(o, exp)
    row.update({"eps_used": model.eps, "sites": len(theta), "windows": est.details["windows"]})
    row.update(_mc_fields(est))
    row["exact_event_successes"] = est.details["exact_event_successes"]
    return [row], _mc_fields(est), est.verdict == "bound-violated"


def _run_minami(o, exp, workers):
    model = _model(o, o["L"], 0.8)
    theta = box_sites(Box.centered(model.d, o["L"]))
    rep = minami_empirical(model, theta, (o["J_lo"], o["J_hi"]), o["trials"], o["seed"], workers=workers)
    violated = rep.moment - 3 * rep.standard_error > rep.bound
    verdict = "bound-violated" if violated else ("consistent" if rep.within_bound else "inconclusive")
    out = {
        "moment": rep.moment,
        "standard_error": rep.standard_error,
        "bound": rep.bound,
        "prob_two_or_more": rep.prob_two_or_more,
        "verdict": verdict,
    }
    row = _echo(o, exp)
    row.update({"eps_used": model.eps, "sites": len(theta)})
    row.update(out)
    return [row], out, violated


def _run_green_regular(o, exp, workers):
    model = _model(o, o["L"], o["beta"])
    m = _mass(o, "m", model.eps, o["L"], o["beta"], model.d)
    mp = m / 2 if o["m_prime"] == AUTO else o["m_prime"]
    rep = localizing_implies_regular_experiment(
        model, o["L"], m, mp, o["beta"], o["trials"], o["seed"], tau=o["tau"], n_uniform=o["n_uniform"], n_gap=o["n_gap"], workers=workers
    )
    out = {
        "eps_used": model.eps,
        "m_used": m,
        "m_prime_used": mp,
        "probes": rep.probes,
        "localizing_trials": rep.localizing_trials,
        "hypothesis_count": rep.hypothesis_count,
        "excluded_norm": rep.excluded_norm,
        "regular_count": rep.regular_count,
        "pass_fraction": rep.pass_fraction,
        "worst_margin": rep.worst_margin,
        "counterexamples": len(rep.counterexamples),
    }
    row = _echo(o, exp)
    row.update(out)
    return [row], out, False


def _run_green_cross(o, exp, workers):
    L = float(o["ell"]) ** o["gamma"]
    model = _model(o, L, o["beta"])
    mp = o["m"] / 2 if o["m_prime"] == AUTO else o["m_prime"]
    rep = regular_implies_localizing_experiment(
        model, o["ell"], o["gamma"], o["m"], mp, o["beta"], o["tau"], o["trials"], o["seed"], workers=workers
    )
    out = {
        "eps_used": model.eps,
        "m_prime_used": mp,
        "L_used": rep.L,
        "hypothesis_count": rep.hypothesis_count,
        "level_spacing_failures": rep.level_spacing_failures,
        "matching_count": rep.matching_count,
        "localized_count": rep.localized_count,
        "labeling_fraction": rep.labeling_fraction,
        "localized_fraction": rep.localized_fraction,
    }
    row = _echo(o, exp)
    row.update(out)
    return [row], out, False


def _run_wegner(o, exp, workers):
    model = _model(o, o["L"], o["beta"])
    est = wegner_empirical(model, o["L"], o["E"], o["beta"], o["trials"], o["seed"], workers=workers)
    row = _echo(o, exp)
    row["eps_used"] = model.eps
    row.update(_mc_fields(est))
    return [row], _mc_fields(est), est.verdict == "bound-violated"


def _run_scan(o, exp, workers):
    params = validate_scale_params(o["xi"], o["zeta"], o["beta"], o["tau"], o["gamma"])
    model = _model(o, o["L0"], o["beta"])
    m0 = _mass(o, "m0", model.eps, o["L0"], o["beta"], model.d)
    scan = msa_scan(model, params, o["L0"], o["k"], m0, o["trials"], o["seed"], site_cap=o["site_cap"], workers=workers)
    rows = []
    violated = False
    for s in scan:
        row = _echo(o, exp)
        row.update({"eps_used": model.eps, "m0_used": m0, "scale_index": s.k, "scale": s.L, "side": s.side, "sites": s.sites, "mass": s.mass, "skipped": s.skipped})
        if s.estimate is not None:
            row.update(_mc_fields(s.estimate))
            violated |= s.estimate.verdict == "bound-violated"
        else:
            row.update(dict.fromkeys(("trials_run", "successes", "estimate", "wilson_low", "wilson_high", "standard_error", "bound", "verdict")))
        row.update({"zeta_target": s.zeta_target, "xi_target": s.xi_target, "meets_zeta": s.meets_zeta, "meets_xi": s.meets_xi})
        rows.append(row)
    return rows, {"scales": len(rows)}, violated


def _run_decay_rates(o, exp, workers):
    params = validate_scale_params(o["xi"], o["zeta"], o["beta"], o["tau"], o["gamma"])
    L = o["L"] if o["L"] is not None else o["ell"] ** params.gamma
    rates = reference_decay_rates(o["m"], o["ell"], L, params, o["C"])
    rows = []
    for name, value in rates.items():
        row = _echo(o, exp)
        row.update({"L_used": L, "rate": name, "value": value})
        rows.append(row)
    return rows, rates, False


_SCALE = (
    Option("xi", "float", 0.1),
    Option("zeta", "float", 0.3),
    Option("beta", "float", 0.4),
    Option("tau", "float", 0.9),
    Option("gamma", "float", 1.3),
)


EXPERIMENTS = {
    e.name: e
    for e in (
        Experiment(
            "certify",
            (
                Option("L", "rational", Fraction(20), "box side"),
                Option("m", "auto", AUTO, "localization mass; auto = log(1 + exp(-L^beta)/(2 d eps))"),
                Option("beta", "float", 0.8),
                Option("tau", "float", 0.5),
            ),
            _run_certify,
            doc="Certify whether seeded boxes are m-localizing.",
        ),
        Experiment(
            "cover",
            (Option("d", "int", 1), Option("L", "rational", Fraction(100)), Option("ell", "rational", Fraction(10))),
            _run_cover,
            uses_model=False,
            doc="Suitable cover centers and exhaustive invariant checks.",
        ),
        Experiment(
            "mc-localizing",
            (
                Option("L", "rational", Fraction(20)),
                Option("m", "auto", AUTO),
                Option("beta", "float", 0.8),
                Option("tau", "float", 0.5),
                Option("xi", "float", None, "optional target exponent"),
            ),
            _run_mc_localizing,
            doc="Frequency of m-localizing boxes against the initial-step bound.",
        ),
        Experiment(
            "mc-spacing",
            (
                Option("L", "rational", Fraction(20), "side of the box Theta"),
                Option("R", "float", None, "spacing scale; defaults to L"),
                Option("beta", "float", 0.8),
                Option("eps0", "float", None, "regime cap in the bound; defaults to eps"),
            ),
            _run_mc_spacing,
            doc="Frequency of level spacing against its probability bound.",
        ),
        Experiment(
            "klm",
            (
                Option("L", "rational", Fraction(4)),
                Option("I_lo", "float", -1.0),
                Option("I_hi", "float", 2.0),
                Option("eta", "float", 0.001),
            ),
            _run_klm,
            doc="Probability that small windows hold at most one eigenvalue.",
        ),
        Experiment(
            "minami",
            (Option("L", "rational", Fraction(1)), Option("J_lo", "float", 0.0), Option("J_hi", "float", 0.1)),
            _run_minami,
            doc="Second factorial moment of eigenvalue counts.",
        ),
        Experiment(
            "green-regular",
            (
                Option("L", "rational", Fraction(40)),
                Option("m", "auto", AUTO),
                Option("m_prime", "auto", AUTO, "auto = m/2"),
                Option("beta", "float", 0.8),
                Option("tau", "float", 0.5),
                Option("n_uniform", "int", 3),
                Option("n_gap", "int", 2),
            ),
            _run_green_regular,
            doc="Localizing boxes with bounded resolvent are regular.",
        ),
        Experiment(
            "green-cross",
            (
                Option("ell", "rational", Fraction(6)),
                Option("gamma", "float", 2.0),
                Option("m", "float", 1.0),
                Option("m_prime", "auto", AUTO, "auto = m/2"),
                Option("beta", "float", 0.8),
                Option("tau", "float", 0.8),
            ),
            _run_green_cross,
            doc="Regular covers yield a localized site labeling.",
        ),
        Experiment(
            "wegner",
            (Option("L", "rational", Fraction(10)), Option("E", "float", 0.5), Option("beta", "float", 0.8)),
            _run_wegner,
            doc="Frequency of a bounded resolvent at a fixed energy.",
        ),
        Experiment(
            "scan",
            (Option("L0", "float", 20.0), Option("k", "int", 1), Option("m0", "auto", AUTO), Option("site_cap", "int", 4096))
            + _SCALE,
            _run_scan,
            doc="Localization frequency along the scale sequence L_k = L0^(gamma^k).",
        ),
        Experiment(
            "decay-rates",
            (Option("m", "float", 1.0), Option("ell", "float", 100.0), Option("L", "float", None), Option("C", "float", 1.0))
            + _SCALE,
            _run_decay_rates,
            uses_model=False,
            doc="Reference decay-rate table with implicit constants set to C.",
        ),
    )
}


def run_experiment(name: str, values: dict, workers: int = 1):
    """Resolve options and run; returns ``(rows, summary, violated, options)``."""
    if name not in EXPERIMENTS:
        raise InvalidArgument(f"unknown experiment {name!r}")
    exp = EXPERIMENTS[name]
    o = resolve(exp, values)
    if workers < 1:
        raise InvalidArgument("workers: must be at least 1")
    rows, summary, violated = exp.runner(o, exp, workers)
    return rows, summary, violated, o
