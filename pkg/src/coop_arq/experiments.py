"""Scenario runner: configuration, scenario families, throughput and CSV output.

A scenario turns an :class:`ExperimentConfig` into a list of :class:`CurvePoint`
rows.  Everything random is derived from the run seed, so the same config and
seed give byte-identical CSV files for any worker count.
"""
import configparser
import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, NumericalError
from .fading import (Geometry, LinkVariances, pairwise_variances, place_relays, substream,
                     variances_from_geometry)
from .outage import (SystemParams, db2lin, p_out_oaf, p_out_saf, p_out_soaf_a,
                     p_out_soaf_a_tilde, p_out_soaf_b_tilde, chain_requirement_holds)
from .packet import estimate_per, estimate_saf_per
from .protocols import DEFAULT_MIX, ProtocolKind, estimate_outage, suggested_bias
from .tcm import CODE_TAGS, get_code
from .thresholds import (DEFAULT_EPS0, DEFAULT_V, CodeMetrics, find_delta_e_star,
                         log_scale_thresholds, saf_threshold)

MIN_MC_TRIALS = 1000
THRESHOLD_SOURCES = ("explicit", "logscale", "alg1")
RULES = ("max-throughput", "max-rate")
COLUMNS = ("scenario", "protocol", "code", "rho_db", "n", "value", "ci", "flags")


# --- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a scenario needs.  Threshold values are in units of delta."""
    scenario: str = "saf-outage"
    snr_db: tuple = (10.0, 15.0, 20.0)
    trials: int = 100_000
    seed: int = 0
    protocols: tuple = ("saf",)
    codes: tuple = ("rate-1",)
    rate: float = 1.0
    relays: int = 3
    rounds: int = 3
    geometry: Geometry = field(default_factory=Geometry)
    variances: str = "unit"  # unit | geometry
    threshold_source: str = "explicit"
    threshold_sets: tuple = ((1.5,),)
    v: tuple = DEFAULT_V
    eps0: float = DEFAULT_EPS0
    alpha: float = 1.0
    p_target: float = 1e-3
    placements: int = 4
    rates: tuple = (1, 2, 3, 4, 5)
    rule: str = "max-throughput"
    importance: bool = False
    mix: float = DEFAULT_MIX
    workers: int = 1
    out: str = ""

    def __post_init__(self):
        if len(self.snr_db) == 0:
            raise ConfigError("SNR grid is empty")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; known: {', '.join(SCENARIOS)}")
        if self.scenario in MC_SCENARIOS and self.trials < MIN_MC_TRIALS:
            raise ConfigError(f"Monte Carlo scenarios need trials >= {MIN_MC_TRIALS}")
        if self.variances not in ("unit", "geometry"):
            raise ConfigError("variances must be 'unit' or 'geometry'")
        if self.threshold_source not in THRESHOLD_SOURCES:
            raise ConfigError(f"thresholds source must be one of {THRESHOLD_SOURCES}")
        if self.rule not in RULES:
            raise ConfigError(f"rule must be one of {RULES}")
        if not 0 < self.p_target <= 1:
            raise ConfigError("target must lie in (0, 1]")
        if self.placements < 1 or self.workers < 1 or self.relays < 1 or self.rounds < 1:
            raise ConfigError("placements, workers, relays and rounds must be >= 1")
        if not 0 <= self.mix < 1:
            raise ConfigError("mix must lie in [0, 1)")
        for p in self.protocols:
            ProtocolKind.parse(p)
        for c in self.codes:
            get_code(c)
        for r in self.rates:
            get_code(f"rate-{r}")
        if any(len(s) == 0 or min(s) < 0 for s in self.threshold_sets):
            raise ConfigError("threshold sets must be nonempty and nonnegative")

    def system(self, rho_db, **kw):
        """SystemParams at one grid point with the configured link variances."""
        var = LinkVariances() if self.variances == "unit" else variances_from_geometry(self.geometry)
        base = SystemParams(R=self.rate, m=self.relays, N=self.rounds, variances=var,
                            rho=float(db2lin(rho_db)))
        return base.at(**kw) if kw else base


def _floats(text, name):
    text = text.strip()
    if ":" in text:  # start:stop:step, stop included
        try:
            a, b, s = (float(x) for x in text.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad range for {name}: {text!r}") from exc
        if s <= 0 or b < a:
            raise ConfigError(f"bad range for {name}: {text!r}")
        return tuple(float(x) for x in np.round(np.arange(a, b + s / 2, s), 10))
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad number list for {name}: {text!r}") from exc


def _words(text):
    return tuple(w for w in text.replace(",", " ").split() if w)


def load_config(path=None, text=None, **overrides):
    """Read an INI-style config; missing keys keep their defaults.

    Sections: [system] rate, relays, rounds; [geometry] variances, s0, s1, s2, eta;
    [run] scenario, snr_db, trials, seed, workers, protocols, codes, importance, mix;
    [thresholds] source, values (sets separated by ';'), v, eps0, alpha;
    [throughput] target, placements, rates, rule.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        if path is not None:
            with open(path) as fh:
                cp.read_file(fh)
        elif text is not None:
            cp.read_string(text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    known = {"system": {"rate", "relays", "rounds"},
             "geometry": {"variances", "s0", "s1", "s2", "eta"},
             "run": {"scenario", "snr_db", "trials", "seed", "workers", "protocols", "codes",
                     "importance", "mix"},
             "thresholds": {"source", "values", "v", "eps0", "alpha"},
             "throughput": {"target", "placements", "rates", "rule"}}
    kw = {}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")
        extra = set(cp[sec]) - known[sec]
        if extra:
            raise ConfigError(f"unknown keys in [{sec}]: {sorted(extra)}")
    try:
        g = cp["system"] if cp.has_section("system") else {}
        if "rate" in g:
            kw["rate"] = float(g["rate"])
        if "relays" in g:
            kw["relays"] = int(g["relays"])
        if "rounds" in g:
            kw["rounds"] = int(g["rounds"])
        g = cp["geometry"] if cp.has_section("geometry") else {}
        geo = {k: float(g[k]) for k in ("s0", "s1", "s2", "eta") if k in g}
        if geo:
            kw["geometry"] = Geometry(**geo)
        if "variances" in g:
            kw["variances"] = g["variances"].strip()
        g = cp["run"] if cp.has_section("run") else {}
        if "scenario" in g:
            kw["scenario"] = g["scenario"].strip()
        if "snr_db" in g:
            kw["snr_db"] = _floats(g["snr_db"], "snr_db")
        for k in ("trials", "seed", "workers"):
            if k in g:
                kw[k] = int(float(g[k]))
        if "protocols" in g:
            kw["protocols"] = _words(g["protocols"])
        if "codes" in g:
            kw["codes"] = _words(g["codes"])
        if "importance" in g:
            kw["importance"] = cp.getboolean("run", "importance")
        if "mix" in g:
            kw["mix"] = float(g["mix"])
        g = cp["thresholds"] if cp.has_section("thresholds") else {}
        if "source" in g:
            kw["threshold_source"] = g["source"].strip()
        if "values" in g:
            kw["threshold_sets"] = tuple(_floats(s, "values") for s in g["values"].split(";")
                                         if s.strip())
        if "v" in g:
            kw["v"] = _floats(g["v"], "v")
        if "eps0" in g:
            kw["eps0"] = float(g["eps0"])
        if "alpha" in g:
            kw["alpha"] = float(g["alpha"])
        g = cp["throughput"] if cp.has_section("throughput") else {}
        if "target" in g:
            kw["p_target"] = float(g["target"])
        if "placements" in g:
            kw["placements"] = int(g["placements"])
        if "rates" in g:
            kw["rates"] = tuple(int(x) for x in _floats(g["rates"], "rates"))
        if "rule" in g:
            kw["rule"] = g["rule"].strip()
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    kw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# --- curve points, slopes, throughput ------------------------------------------------

@dataclass
class CurvePoint:
    """One CSV row; ``ci`` is None for analytic values."""
    scenario: str
    protocol: str
    code: str
    rho_db: float
    n: int
    value: float
    ci: float = None
    flags: tuple = ()

    def __post_init__(self):
        if not self.value >= 0:
            raise NumericalError(f"negative or NaN value {self.value!r}")


def diversity_slope(points):
    """Negative log-log slope over the top decade of the grid.

    ``points`` holds CurvePoints or (rho_db, value) pairs.
    """
    pts = [(p.rho_db, p.value) if isinstance(p, CurvePoint) else tuple(p) for p in points]
    x = np.array([p[0] for p in pts], float)
    y = np.array([p[1] for p in pts], float)
    top = x >= x.max() - 10.0
    if top.sum() < 3:
        raise NumericalError("need at least three points in the top decade")
    if np.any(~(y[top] > 0)) or np.any(~np.isfinite(y[top])):
        raise NumericalError("slope needs positive finite values")
    if np.ptp(x[top]) == 0:
        raise NumericalError("degenerate SNR grid")
    return float(-np.polyfit(x[top] / 10.0, np.log10(y[top]), 1)[0])


def throughput_metric(pers, R, N):
    """Long-run delivered rate per round from the PER after rounds 0..N.

    A packet takes 1 + sum_{l<N} P_l rounds on average and is delivered with
    probability 1 - P_N, so T = R (1 - P_N) / (1 + sum_{l=0}^{N-1} P_l).  The
    denominator is at least one, so an error-free channel gives exactly R.
    """
    p = np.asarray(pers, float)
    if p.shape != (N + 1,):
        raise ValueError(f"need {N + 1} PER values")
    if np.any(p < 0) or np.any(p > 1) or np.any(~np.isfinite(p)):
        raise ValueError("PERs must lie in [0, 1]")
    if np.any(np.diff(p) > 1e-12):
        raise ValueError("PERs must be nonincreasing in n")
    return float(R * (1.0 - p[N]) / (1.0 + p[:N].sum()))


def point_seed(seed, *keys):
    """Seed shared by every protocol at one grid point (paired comparisons)."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1, np.uint64)[0])


def _rate_option(R, pers, target, N, rule):
    """(throughput, feasible) for one rate."""
    ok = pers[N] <= target
    return (throughput_metric(pers, R, N) if ok else 0.0), ok


def choose_rate(per_by_rate, target, N, rule="max-throughput"):
    """Pick the rate for one placement; returns (R or 0, throughput).

    max-rate: the largest feasible rate; max-throughput: the feasible rate with
    the best throughput.  A target of 1 makes every rate feasible.
    """
    best = (0, 0.0)
    for R in sorted(per_by_rate):
        t, ok = _rate_option(R, per_by_rate[R], target, N, rule)
        if not ok:
            continue
        if rule == "max-rate" or t > best[1]:
            best = (R, t)
    return best


def placement_params(cfg, rho_db, index, seed, R):
    """SystemParams for the index-th relay placement at one grid point."""
    pos = place_relays(cfg.geometry, cfg.relays, substream(seed, index, "placement"))
    var = pairwise_variances(pos, cfg.geometry.eta)
    return SystemParams(R=R, m=cfg.relays, N=cfg.rounds, variances=var, rho=float(db2lin(rho_db)))


def protocol_thresholds(kind, cfg, params, code, tset=None):
    """Thresholds (linear SNR) of a protocol at one grid point.

    explicit: the given multiples of delta; logscale: lambda_e v ln(rho);
    alg1: the hop-threshold search for SOAF-B, Delta_e* v_1 for SOAF-A and the single-relay
    rule for SAF.  Searches use the worst-case variances of the relay region
    when the config asks for geometry.
    """
    kind = ProtocolKind.parse(kind)
    if kind in (ProtocolKind.DIRECT, ProtocolKind.AF, ProtocolKind.OAF, ProtocolKind.SODF_B):
        return None
    d, K = params.delta, params.K
    worst = params.at(variances=variances_from_geometry(cfg.geometry)
                      if cfg.variances == "geometry" or not isinstance(params.variances, LinkVariances)
                      else params.variances)
    if cfg.threshold_source == "explicit":
        s = np.asarray(tset if tset is not None else cfg.threshold_sets[0], float)
        if kind == ProtocolKind.SOAF_B:
            if len(s) == 1:
                s = np.repeat(s, K)
            if len(s) < K:
                raise ConfigError(f"soaf-b needs {K} threshold multiples")
            return s[:K] * d
        return s[:1] * d
    metrics = CodeMetrics.from_code(code, cfg.eps0)
    if cfg.threshold_source == "logscale":
        th = log_scale_thresholds(params.rho, params.m, params.N, cfg.v, metrics)
        return th if kind == ProtocolKind.SOAF_B else th[:1]
    if kind == ProtocolKind.SAF:
        return np.array([saf_threshold(metrics, worst.at(m=1), cfg.alpha)])
    res = find_delta_e_star(cfg.v, metrics, worst)
    return res.thresholds if kind == ProtocolKind.SOAF_B else res.thresholds[:1]


def _bias(cfg, params):
    return suggested_bias(params) if cfg.importance else 1.0


def rate_adapted_throughput(kind, cfg, rho_db, seed, trials=None):
    """Average over placements of the rate-adapted throughput at one grid point.

    Every protocol uses the same placements and per-rate trial seeds, so
    protocol differences are paired.  Returns (mean, 3-sigma spread over
    placements, chosen rates).
    """
    kind = ProtocolKind.parse(kind)
    trials = cfg.trials if trials is None else trials
    vals, picks = [], []
    N = cfg.rounds
    for p in range(cfg.placements):
        per = {}
        for R in cfg.rates:
            code = f"rate-{R}"
            params = placement_params(cfg, rho_db, p, seed, R)
            th = protocol_thresholds(kind, cfg, params, code)
            est = estimate_per(kind, code, params, th, trials=trials,
                               seed=point_seed(seed, p, R), workers=cfg.workers)
            per[R] = est.prob
        R, t = choose_rate(per, cfg.p_target, N, cfg.rule)
        vals.append(t)
        picks.append(R)
    vals = np.array(vals)
    spread = 3.0 * vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
    return float(vals.mean()), float(spread), picks


# --- scenarios --------------------------------------------------------------------

def _mc_flags(est, n, extra=()):
    flags = ["method=mc", *extra]
    if est.failures[n] < 100:
        flags.append("low-confidence")
    return tuple(flags)


def _fmt(x):
    return f"{x:g}"


def _set_label(s):
    return "x".join(_fmt(v) for v in s)


def _sets(cfg):
    return cfg.threshold_sets if cfg.threshold_source == "explicit" else (None,)


def _th_flag(cfg, th, params):
    if th is None:
        return ()
    lam = np.asarray(th) / params.delta if params.delta > 0 else np.asarray(th)
    return (f"thresholds={cfg.threshold_source}", "lambda=" + "/".join(f"{x:.6g}" for x in lam))


def scenario_saf_lambda(cfg):
    """SNR at which the analytic SAF outage after N rounds meets the target, per lambda."""
    rows = []
    for s in cfg.threshold_sets:
        lam = s[0]
        params = cfg.system(cfg.snr_db[0], m=1)

        def gap(db):
            p = params.at(rho=float(db2lin(db)))
            return np.log(p_out_saf(params.N, lam * p.delta, p)) - np.log(cfg.p_target)
        lo, hi = min(cfg.snr_db), max(cfg.snr_db)
        if gap(lo) < 0 or gap(hi) > 0:
            raise NumericalError(f"target not crossed in [{lo}, {hi}] dB for lambda={lam}")
        db = brentq(gap, lo, hi, xtol=1e-9)
        rows.append(CurvePoint(cfg.scenario, "saf", "", db, params.N, cfg.p_target, None,
                               ("method=analytic", f"lambda={lam:g}")))
    return rows


def _mc_rows(cfg, kind, params, th, rho_db, flags, seed_key):
    est = estimate_outage(kind, params, th, trials=cfg.trials,
                          seed=point_seed(cfg.seed, *seed_key), bias=_bias(cfg, params),
                          mix=cfg.mix, workers=cfg.workers)
    return [CurvePoint(cfg.scenario, kind, "", rho_db, n, float(est.prob[n]), float(est.ci[n]),
                       _mc_flags(est, n, flags)) for n in range(params.N + 1)]


def _analytic_rows(cfg, kind, rho_db, fn, N, flags, method="analytic"):
    return [CurvePoint(cfg.scenario, kind, "", rho_db, n, float(fn(n)), None,
                       (f"method={method}", *flags)) for n in range(N + 1)]


def scenario_saf_outage(cfg):
    """SAF outage: closed form, lower bound and Monte Carlo for every Delta."""
    rows = []
    for i, rho_db in enumerate(cfg.snr_db):
        params = cfg.system(rho_db, m=1)
        for s in cfg.threshold_sets:
            D = s[0] * params.delta
            fl = (f"lambda={s[0]:g}",)
            rows += _analytic_rows(cfg, "saf", rho_db, lambda n: p_out_saf(n, D, params), params.N, fl)
            rows += _analytic_rows(cfg, "saf", rho_db, lambda n: p_out_saf(n, D, params, True),
                                   params.N, fl, "bound")
            rows += _mc_rows(cfg, "saf", params, [D], rho_db, fl, (i, 0))
    return rows


def scenario_oaf_soafa_outage(cfg):
    """OAF and SOAF-A outage: closed forms, SOAF-A bound and Monte Carlo."""
    rows = []
    for i, rho_db in enumerate(cfg.snr_db):
        params = cfg.system(rho_db)
        rows += _analytic_rows(cfg, "oaf", rho_db, lambda n: p_out_oaf(n, params), params.N, ())
        rows += _mc_rows(cfg, "oaf", params, None, rho_db, (), (i, 0))
        for s in cfg.threshold_sets:
            D = s[0] * params.delta
            fl = (f"lambda={s[0]:g}",)
            rows += _analytic_rows(cfg, "soaf-a", rho_db, lambda n: p_out_soaf_a(n, D, params),
                                   params.N, fl)
            rows += _analytic_rows(cfg, "soaf-a", rho_db,
                                   lambda n: p_out_soaf_a_tilde(n, D, params), params.N, fl, "bound")
            rows += _mc_rows(cfg, "soaf-a", params, [D], rho_db, fl, (i, 0))
    return rows


def scenario_soafb_outage(cfg):
    """SOAF-B outage lower bound and Monte Carlo per threshold set, OAF for reference."""
    rows = []
    for i, rho_db in enumerate(cfg.snr_db):
        params = cfg.system(rho_db)
        for s in cfg.threshold_sets:
            th = protocol_thresholds("soaf-b", cfg, params, cfg.codes[0], s)
            fl = ("lambda=" + _set_label(th / params.delta),
                  f"chain_requirement={chain_requirement_holds(th, params.delta, 1.01)}")
            rows += _analytic_rows(cfg, "soaf-b", rho_db,
                                   lambda n: p_out_soaf_b_tilde(n, th, params), params.N, fl, "bound")
            rows += _mc_rows(cfg, "soaf-b", params, th, rho_db, fl, (i, 0))
        if "oaf" in cfg.protocols:
            rows += _analytic_rows(cfg, "oaf", rho_db, lambda n: p_out_oaf(n, params), params.N, ())
    return rows


def scenario_saf_per(cfg):
    """SAF packet error rate via the round decomposition, analytic outage alongside."""
    rows = []
    for code in cfg.codes:
        R = get_code(code).R
        for i, rho_db in enumerate(cfg.snr_db):
            params = cfg.system(rho_db, R=R, m=1)
            for s in cfg.threshold_sets:
                D = s[0] * params.delta
                fl = (f"lambda={s[0]:g}",)
                est = estimate_saf_per(code, params, D, trials=cfg.trials,
                                       seed=point_seed(cfg.seed, i, R), importance=cfg.importance,
                                       workers=cfg.workers)
                for n in range(params.N + 1):
                    few = est.failures[min(n, params.N)] < 100 or est.p_sd * cfg.trials < 100
                    flags = ("method=mc-decomposition", *fl) + (("low-confidence",) if few else ())
                    rows.append(CurvePoint(cfg.scenario, "saf", code, rho_db, n,
                                           float(est.prob[n]), float(est.ci[n]), flags))
                rows += [replace(p, code=code) for p in _analytic_rows(
                    cfg, "saf", rho_db, lambda n: p_out_saf(n, D, params), params.N, fl, "outage")]
    return rows


def _per_rows(cfg, kind, code, params, th, rho_db, seed, harq=False, extra=()):
    est = estimate_per(kind, code, params, th, trials=cfg.trials, seed=seed, harq=harq,
                       bias=_bias(cfg, params), mix=cfg.mix, workers=cfg.workers)
    fl = _th_flag(cfg, th, params) + extra
    if cfg.importance:
        fl += (f"bias={_bias(cfg, params):.6g}",)
    return [CurvePoint(cfg.scenario, kind, code, rho_db, n, float(est.prob[n]), float(est.ci[n]),
                       _mc_flags(est, n, fl)) for n in range(params.N + 1)]


def scenario_soafb_per(cfg):
    """Packet error rate of the configured protocols for every code and threshold set."""
    rows = []
    for code in cfg.codes:
        R = get_code(code).R
        for i, rho_db in enumerate(cfg.snr_db):
            params = cfg.system(rho_db, R=R)
            seed = point_seed(cfg.seed, i, R)
            for kind in cfg.protocols:
                for s in _sets(cfg):
                    th = protocol_thresholds(kind, cfg, params, code, s)
                    rows += _per_rows(cfg, ProtocolKind.parse(kind).value, code, params, th,
                                      rho_db, seed)
    return rows


def scenario_throughput(cfg):
    """Rate-adapted throughput under the PER target, averaged over relay placements."""
    rows = []
    for i, rho_db in enumerate(cfg.snr_db):
        seed = point_seed(cfg.seed, i)
        for kind in cfg.protocols:
            t, ci, picks = rate_adapted_throughput(kind, cfg, rho_db, seed)
            flags = ("method=mc", f"target={cfg.p_target:g}", f"rule={cfg.rule}",
                     "rates=" + "/".join(str(r) for r in picks))
            rows.append(CurvePoint(cfg.scenario, ProtocolKind.parse(kind).value, "adaptive",
                                   rho_db, cfg.rounds, t, ci, flags))
    return rows


def scenario_harq(cfg):
    """ARQ and HARQ packet error rate on one relay placement drawn from the seed."""
    rows = []
    for code in cfg.codes:
        R = get_code(code).R
        for i, rho_db in enumerate(cfg.snr_db):
            params = placement_params(cfg, rho_db, 0, cfg.seed, R)
            seed = point_seed(cfg.seed, i, R)
            for kind in cfg.protocols:
                th = protocol_thresholds(kind, cfg, params, code)
                name = ProtocolKind.parse(kind).value
                rows += _per_rows(cfg, name, code, params, th, rho_db, seed, extra=("mode=arq",))
                rows += _per_rows(cfg, name, code, params, th, rho_db, seed, harq=True,
                                  extra=("mode=harq",))
    return rows


def scenario_thresholds(cfg):
    """Threshold schedules per SNR: the hop-threshold search and the log-scale rule, in linear SNR."""
    rows = []
    for code in cfg.codes:
        metrics = CodeMetrics.from_code(code, cfg.eps0)
        R = get_code(code).R
        for rho_db in cfg.snr_db:
            params = cfg.system(rho_db, R=R)
            res = find_delta_e_star(cfg.v, metrics, params)
            ls = log_scale_thresholds(params.rho, params.m, params.N, cfg.v, metrics)
            for k in range(params.K):
                rows.append(CurvePoint(cfg.scenario, "soaf-b", code, rho_db, k + 1,
                                       float(res.thresholds[k]), None,
                                       ("method=alg1", f"delta_e={res.delta_e:.10g}")))
                rows.append(CurvePoint(cfg.scenario, "soaf-b", code, rho_db, k + 1,
                                       float(ls[k]), None, ("method=logscale",)))
    return rows


SCENARIOS = {
    "saf-lambda": scenario_saf_lambda,
    "saf-outage": scenario_saf_outage,
    "oaf-soafa-outage": scenario_oaf_soafa_outage,
    "soafb-outage": scenario_soafb_outage,
    "saf-per": scenario_saf_per,
    "soafb-per": scenario_soafb_per,
    "throughput": scenario_throughput,
    "harq": scenario_harq,
    "thresholds": scenario_thresholds,
}
MC_SCENARIOS = ("saf-outage", "oaf-soafa-outage", "soafb-outage", "saf-per", "soafb-per",
                "throughput", "harq")


# --- CSV --------------------------------------------------------------------------

def _header(cfg):
    lines = ["coop-arq scenario output"]
    for k, v in sorted(vars(cfg).items()):
        if k == "out":
            continue
        lines.append(f"{k} = {v}")
    return lines


def to_csv(cfg, points):
    """CSV text: '#' parameter lines, then one row per point."""
    buf = io.StringIO()
    for line in _header(cfg):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for p in points:
        w.writerow([p.scenario, p.protocol, p.code, f"{p.rho_db:.10g}", p.n, f"{p.value:.10g}",
                    "" if p.ci is None else f"{p.ci:.10g}", ";".join(p.flags)])
    return buf.getvalue()


def run_scenario(cfg, out=None):
    """Run ``cfg.scenario``; write the CSV to ``out`` (or cfg.out) if given and return it."""
    fn = SCENARIOS.get(cfg.scenario)
    if fn is None:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}")
    out = out if out is not None else (cfg.out or None)
    if out is not None:
        parent = Path(out).resolve().parent
        if not parent.is_dir():
            raise ConfigError(f"output directory {parent} does not exist")
    text = to_csv(cfg, fn(cfg))
    if out is not None:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise ConfigError(f"cannot write {out}: {exc}") from exc
    return text


__all__ = ["ExperimentConfig", "CurvePoint", "SCENARIOS", "CODE_TAGS", "load_config",
           "run_scenario", "to_csv", "diversity_slope", "throughput_metric", "choose_rate",
           "rate_adapted_throughput", "protocol_thresholds", "placement_params", "point_seed"]
