"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (see conftest) and then asserts.  The Monte
Carlo ones are slow: about 1.5 hours on one core for the whole file.
"""
import numpy as np
import pytest

from coop_arq.experiments import (ExperimentConfig, diversity_slope, placement_params, point_seed,
                                  protocol_thresholds, rate_adapted_throughput)
from coop_arq.fading import Geometry, variances_from_geometry
from coop_arq.outage import (SystemParams, db2lin, p_out_oaf, p_out_saf, p_out_soaf_a,
                             p_out_soaf_a_tilde, p_out_soaf_b_tilde, chain_requirement_holds)
from coop_arq.packet import estimate_per, estimate_saf_per
from coop_arq.protocols import estimate_outage, suggested_bias
from coop_arq.tcm import distance_spectrum, get_code
from coop_arq.thresholds import (DEFAULT_V, CodeMetrics, alg1_condition_lhs, alg1_rhs,
                                 alg1_schedule, check_condition_31, find_delta_e_star,
                                 min_lambda_log_scale)

pytestmark = pytest.mark.acceptance


def P(db, **kw):
    return SystemParams(rho=float(db2lin(db)), **kw)


def test_criterion_1_analytic_vs_mc(report):
    T = 10_000_000
    worst, bad = 0.0, []
    for db in (10, 15, 20):
        p = P(db)
        cases = [("saf", p.at(m=1), [lam * p.delta], (lambda n, q=p.at(m=1), D=lam * p.delta:
                                                    p_out_saf(n, D, q)), f"saf {lam}d")
                 for lam in (0.0, 1.5, 3.0)]
        cases.append(("oaf", p, None, lambda n: p_out_oaf(n, p), "oaf"))
        cases.append(("soaf-a", p, [1.5 * p.delta], lambda n: p_out_soaf_a(n, 1.5 * p.delta, p),
                      "soaf-a 1.5d"))
        for i, (kind, q, th, fn, name) in enumerate(cases):
            est = estimate_outage(kind, q, th, trials=T, seed=point_seed(1, db, i))
            for n in range(4):
                ref = fn(n)
                tol = 3 * np.sqrt(ref * (1 - ref) / T)
                err = abs(est.prob[n] - ref)
                worst = max(worst, err / tol if tol > 0 else (np.inf if err > 0 else 0.0))
                if err > tol:
                    bad.append(f"{name} {db}dB n={n}: mc={est.prob[n]:.4g} ref={ref:.4g}")
    ok = report(1, not bad, f"60 points at T=1e7, worst |err|/3sigma = {worst:.2f}"
                + (f"; outside: {bad}" if bad else ""))
    assert ok


def test_criterion_2_bound_ordering(report):
    bad = []
    for db in np.arange(0.0, 40.1, 5.0):
        p = P(db)
        for lam in (0.5, 1.5, 3.0):
            for n in range(4):
                if p_out_saf(n, lam * p.delta, p.at(m=1), True) > p_out_saf(n, lam * p.delta, p.at(m=1)):
                    bad.append(f"saf {db} {lam} {n}")
                if p_out_soaf_a_tilde(n, lam * p.delta, p) > p_out_soaf_a(n, lam * p.delta, p):
                    bad.append(f"soaf-a {db} {lam} {n}")
    sets = (np.array([3.9, 3.9, 3.9]), np.array([2.0, 5.0, 10.0]))
    req = [chain_requirement_holds(s, 1.0, 1.01) for s in sets]
    for db in (0.0, 5.0, 10.0, 15.0):
        p = P(db)
        for j, s in enumerate(sets):
            th = s * p.delta
            est = estimate_outage("soaf-b", p, th, trials=1_000_000, seed=point_seed(2, db, j),
                                  bias=suggested_bias(p))
            for n in range(4):
                # one-sided: bound must not exceed the MC upper confidence limit
                if p_out_soaf_b_tilde(n, th, p) > est.prob[n] + est.ci[n]:
                    bad.append(f"soaf-b {db} {s.tolist()} {n}")
    ok = report(2, not bad and all(req),
                f"chain requirement (lower 1.01) holds for both sets: {req}; violations: {bad or 'none'}")
    assert ok


def test_criterion_3_slopes(report):
    g = np.arange(35.0, 50.1, 1.0)
    cases = {
        "saf 1.5d": (lambda p: p_out_saf(3, 1.5 * p.delta, p.at(m=1)), 4.0, 0.5),
        "saf 0.5d": (lambda p: p_out_saf(3, 0.5 * p.delta, p.at(m=1)), 2.0, 0.3),
        "oaf": (lambda p: p_out_oaf(3, p), 4.0, 0.5),
        "soaf-a bound 1.5d": (lambda p: p_out_soaf_a_tilde(3, 1.5 * p.delta, p), 6.0, 0.5),
        "soaf-b bound 3.9d": (lambda p: p_out_soaf_b_tilde(3, np.full(3, 3.9 * p.delta), p), 10.0, 0.5),
    }
    got, ok = {}, True
    for name, (fn, want, tol) in cases.items():
        s = diversity_slope([(d, fn(P(d))) for d in g])
        got[name] = round(s, 3)
        ok &= abs(s - want) <= tol
    assert report(3, ok, f"slopes over 35-50 dB: {got}")


def test_criterion_4_code_metrics(report):
    want = {"rate-1": (10.0, 1e-9), "rate-2": (4.0, 1e-9), "rate-3": (2.0, 1e-3),
            "rate-4": (1.0, 1e-3), "rate-5": (0.4762, 1e-3)}
    got, ok = {}, True
    for tag, (d2, tol) in want.items():
        v = distance_spectrum(get_code(tag)).d2_min
        got[tag] = round(v, 6)
        ok &= abs(v - d2) <= tol
    assert report(4, ok, f"d2_min: {got}")


def test_criterion_5_per_floor(report):
    grid = np.arange(18.0, 26.1, 2.0)
    ok, parts = True, []
    for lam in (1.5, 3.0):
        per = []
        for i, db in enumerate(grid):
            p = P(db, m=1)
            per.append(estimate_saf_per("rate-1", p, lam * p.delta, trials=1_000_000,
                                        seed=point_seed(5, i, int(lam * 10)), importance=True).prob)
        per = np.array(per)
        out = np.array([[p_out_saf(n, lam * P(db).delta, P(db, m=1)) for n in range(4)] for db in grid])
        for n in (2, 3):
            r = per[:, n] / per[:, 1]
            ro = out[:, n] / out[:, 1]
            flat = abs(r[-1] / r[-3] - 1)  # 22 -> 26 dB
            steep = abs(ro[-1] / ro[-3] - 1)
            good = flat <= 0.25 and steep > 0.25
            ok &= good
            parts.append(f"{lam}d n={n}: PER ratio change {flat:.1%}, outage ratio change {steep:.1%}")
    assert report(5, ok, "; ".join(parts))


def test_criterion_6_diversity_recovery(report):
    grid = np.arange(8.0, 16.1, 2.0)
    met = CodeMetrics.from_code("rate-1")
    curves = {"alg1": [], "const 1.5d": []}
    for i, db in enumerate(grid):
        p = P(db)
        alg = find_delta_e_star(DEFAULT_V, met, p).thresholds
        seed = point_seed(6, i)
        for name, th in (("alg1", alg), ("const 1.5d", np.full(3, 1.5 * p.delta))):
            est = estimate_per("soaf-b", "rate-1", p, th, trials=1_000_000, seed=seed,
                               bias=suggested_bias(p))
            curves[name].append((db, float(est.prob[3]), float(est.ci[3])))
    s = {k: diversity_slope([(d, v) for d, v, _ in c]) for k, c in curves.items()}
    top = {k: c[-1][1] for k, c in curves.items()}
    ok = s["alg1"] >= s["const 1.5d"] + 1.0 and top["alg1"] < top["const 1.5d"]
    pts = {k: [f"{v:.3g}" for _, v, _ in c] for k, c in curves.items()}
    assert report(6, ok, f"slopes alg1 {s['alg1']:.2f} vs const {s['const 1.5d']:.2f}; "
                         f"PER(n=3) over 8-16 dB {pts}")


def test_criterion_7_certificate(report):
    var = variances_from_geometry(Geometry())
    met = CodeMetrics.from_code("rate-1")
    ok, fails = True, []
    for db in range(10, 61, 10):
        p = P(db, variances=var)
        de = find_delta_e_star(DEFAULT_V, met, p).delta_e
        rhs = alg1_rhs(de, DEFAULT_V, p)
        holds = all(alg1_condition_lhs(k, de, DEFAULT_V, met, p) <= rhs for k in (1, 2, 3))
        x = de * (1 - 1e-3)
        breaks = any(alg1_condition_lhs(k, x, DEFAULT_V, met, p) > alg1_rhs(x, DEFAULT_V, p)
                     for k in (1, 2, 3))
        if not (holds and breaks):
            fails.append(db)
    sched = alg1_schedule(DEFAULT_V, met, P(10, variances=var))
    c31 = check_condition_31(sched).passed
    rho = db2lin(60)
    ratio = sched(rho) / (min_lambda_log_scale(3, 3, DEFAULT_V, met) * np.log(rho))
    ok = not fails and c31 and 0.5 <= ratio <= 2.0
    assert report(7, ok, f"certificate failures at {fails or 'none'}; schedule condition passes: {c31}; "
                         f"ratio to lambda_e ln(rho) at 60 dB = {ratio:.3f}")


def test_criterion_8_throughput_and_harq(report):
    grid = tuple(np.arange(0.0, 12.1, 2.0))
    cfg = ExperimentConfig(scenario="throughput", snr_db=grid, trials=10_000, variances="geometry",
                           threshold_source="alg1", placements=4, p_target=1e-3)
    kinds = ("direct", "oaf", "soaf-a", "soaf-b", "sodf-b")
    tp = {k: [] for k in kinds}
    for i, db in enumerate(grid):
        seed = point_seed(8, i)
        for k in kinds:
            tp[k].append(rate_adapted_throughput(k, cfg, db, seed)[0])
    tp = {k: np.array(v) for k, v in tp.items()}
    relay_ok = all(np.all(tp[k] >= tp["direct"]) for k in kinds[1:])
    feasible = np.flatnonzero(tp["oaf"] > 0)
    if feasible.size:
        j = feasible[0]
        margin = tp["soaf-b"][j] / tp["oaf"][j] - 1
        margin_ok = margin >= 0.15
        mtxt = f"SOAF-B/OAF - 1 = {margin:.1%} at {grid[j]:g} dB (lowest OAF-feasible point)"
    else:
        margin_ok, mtxt = False, "OAF infeasible on the whole grid"
    harq_ok, worst = True, 0.0
    for i, db in enumerate(grid):
        params = placement_params(cfg, db, 0, 8, 1)
        th = protocol_thresholds("soaf-b", cfg, params, "rate-1")
        seed = point_seed(8, i, 1)
        a = estimate_per("soaf-b", "rate-1", params, th, trials=20_000, seed=seed)
        h = estimate_per("soaf-b", "rate-1", params, th, trials=20_000, seed=seed, harq=True)
        harq_ok &= bool(np.all(h.prob <= a.prob))
        worst = max(worst, float(np.max(h.prob - a.prob)))
    table = {k: [round(float(x), 3) for x in v] for k, v in tp.items()}
    ok = relay_ok and margin_ok and harq_ok
    assert report(8, ok, f"relay >= no-relay: {relay_ok}; {mtxt}; HARQ <= ARQ everywhere: {harq_ok}; "
                         f"throughput over {grid[0]:g}-{grid[-1]:g} dB: {table}")
