import numpy as np
import pytest

from coop_arq.outage import SystemParams, db2lin
from coop_arq.packet import estimate_per, estimate_saf_per, run_harq_per_trial, run_per_trial
from coop_arq.protocols import suggested_bias


def P(db, **kw):
    return SystemParams(rho=float(db2lin(db)), **kw)


def test_per_deterministic_and_monotone():
    p = P(6)
    a = estimate_per("soaf-b", "rate-1", p, [2, 4, 6], trials=3000, seed=1)
    b = estimate_per("soaf-b", "rate-1", p, [2, 4, 6], trials=3000, seed=1)
    assert np.array_equal(a.prob, b.prob)
    assert np.all(np.diff(a.prob) <= 0)


def test_per_trial_outcome():
    out = run_per_trial("oaf", "rate-2", P(8), None, 3)
    assert 0 <= out.rounds_used <= 3
    assert out.round_events[0].transmitter == -1


def test_harq_trial_not_later():
    for s in range(30):
        a = run_per_trial("soaf-b", "rate-1", P(4), [2, 4, 6], s)
        h = run_harq_per_trial("soaf-b", "rate-1", P(4), [2, 4, 6], s)
        ra = a.rounds_used if a.success else 4
        rh = h.rounds_used if h.success else 4
        assert rh <= ra


def test_saf_decomposition_matches_direct_simulation():
    p = P(6, m=1)
    D = 1.5
    dec = estimate_saf_per("rate-1", p, D, trials=40_000, seed=2)
    mc = estimate_per("saf", "rate-1", p, [D], trials=40_000, seed=3)
    for n in range(4):
        tol = dec.ci[n] + mc.ci[n]
        assert abs(dec.prob[n] - mc.prob[n]) <= tol


def test_saf_decomposition_importance_agrees_with_plain():
    p = P(14, m=1)
    plain = estimate_saf_per("rate-1", p, 3.0, trials=60_000, seed=9)
    isp = estimate_saf_per("rate-1", p, 3.0, trials=60_000, seed=10, importance=True)
    assert np.array_equal(isp.prob, estimate_saf_per("rate-1", p, 3.0, trials=60_000, seed=10,
                                                     importance=True).prob)
    for n in range(4):
        assert abs(plain.prob[n] - isp.prob[n]) <= plain.ci[n] + isp.ci[n]
    # more relay-side events are observed, so the rare rounds are tighter
    assert isp.failures[3] > 5 * plain.failures[3] and isp.ci[3] < plain.ci[3]


def test_saf_decomposition_round_zero_is_direct_link():
    dec = estimate_saf_per("rate-1", P(10, m=1), 1.5, trials=5000, seed=4)
    assert dec.prob[0] == pytest.approx(dec.p_sd)
    assert np.all(np.diff(dec.prob) <= 1e-15)


def test_sodf_not_worse_than_soaf_b():
    p = P(4)
    a = estimate_per("soaf-b", "rate-1", p, [2, 4, 6], trials=8000, seed=5)
    d = estimate_per("sodf-b", "rate-1", p, None, trials=8000, seed=5)
    for n in range(4):
        assert d.prob[n] <= a.prob[n] + a.ci[n] + d.ci[n]


def test_harq_per_not_worse():
    p = P(6)
    a = estimate_per("soaf-b", "rate-1", p, [2, 4, 6], trials=8000, seed=6)
    h = estimate_per("soaf-b", "rate-1", p, [2, 4, 6], trials=8000, seed=6, harq=True)
    assert np.all(h.prob <= a.prob)


def test_importance_sampled_per_agrees_with_plain():
    p = P(6)
    th = [3.0, 6.0, 9.0]
    plain = estimate_per("soaf-b", "rate-1", p, th, trials=30_000, seed=7)
    isp = estimate_per("soaf-b", "rate-1", p, th, trials=30_000, seed=8, bias=suggested_bias(p))
    for n in range(4):
        assert abs(plain.prob[n] - isp.prob[n]) <= plain.ci[n] + isp.ci[n]
