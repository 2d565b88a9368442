"""Closed-form outage probabilities and lower bounds for the relaying ARQ family.

Every function assumes identical statistics inside a link class: w ~ Exp(rho*beta0)
for S-D, a ~ Exp(rho*beta1) for S-R, b ~ Exp(rho*beta2) for R-D and
c ~ Exp(rho*beta3) for R-R.  Outage after round n is the event that all rounds
0..n failed, i.e. log2(1 + SNR) < R in each of them.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import comb

import numpy as np
from scipy import integrate, special

from .errors import ComplexityError, NumericalError
from .fading import LinkVariances

MAX_ENUMERATION = 36  # m * N above this is refused by the exact recursions


def delta_of_rate(R):
    """SNR threshold 2**R - 1 of a rate R in bits per channel use."""
    return 2.0 ** R - 1.0


def qfunc(x):
    """Gaussian tail probability."""
    return 0.5 * special.erfc(np.asarray(x, float) / np.sqrt(2.0))


@dataclass(frozen=True)
class SystemParams:
    """Rate, relay count, ARQ budget, link variances and linear SNR."""
    R: float = 1.0
    m: int = 3
    N: int = 3
    variances: LinkVariances = field(default_factory=LinkVariances)
    rho: float = 100.0

    def __post_init__(self):
        if self.m < 1 or self.N < 1:
            raise ValueError("m and N must be at least 1")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.R < 0:
            raise ValueError("rate must be nonnegative")

    @property
    def delta(self):
        return delta_of_rate(self.R)

    @property
    def K(self):
        """Number of hop thresholds, min(m, N)."""
        return min(self.m, self.N)

    def at(self, rho=None, **kw):
        if rho is not None:
            kw["rho"] = rho
        return replace(self, **kw)


def db2lin(x):
    return 10.0 ** (np.asarray(x, float) / 10.0)


# --- single-link probabilities ------------------------------------------------

def _below(x, mean):
    """Pr{Exp(mean) <= x}, zero for x <= 0."""
    if x <= 0:
        return 0.0
    return -np.expm1(-x / mean)


def p_direct(params):
    """Pr{w < delta}."""
    return _below(params.delta, params.rho * params.variances.beta0)


def p_sr_below(Delta, params):
    return _below(Delta, params.rho * params.variances.beta1)


def p_rd_below(x, params):
    return _below(x, params.rho * params.variances.beta2)


def p_rr_below(Delta, params):
    return _below(Delta, params.rho * params.variances.beta3)


# --- generalized incomplete gamma --------------------------------------------

def gen_inc_gamma(alpha, x, b, rtol=1e-9):
    """Integral of t**(alpha-1) * exp(-t - b/t) over t in [x, inf).

    The range is split at sqrt(b), where the integrand peaks for alpha = 1, and
    each piece is handed to adaptive Gauss-Kronrod quadrature.
    """
    if alpha < 1 or x < 0 or b < 0:
        raise ValueError("need alpha >= 1, x >= 0, b >= 0")

    def f(t):
        if t <= 0:
            return 0.0
        return t ** (alpha - 1) * np.exp(-t - b / t)

    split = max(x, np.sqrt(b))
    eps = max(rtol * 0.1, 1e-13)
    pieces = []
    if split > x:
        pieces.append(integrate.quad(f, x, split, epsabs=0, epsrel=eps, limit=200))
    pieces.append(integrate.quad(f, split, np.inf, epsabs=0, epsrel=eps, limit=200))
    val = sum(p[0] for p in pieces)
    err = sum(p[1] for p in pieces)
    if not np.isfinite(val) or err > rtol * abs(val) + 1e-300:
        raise NumericalError(
            f"gen_inc_gamma({alpha}, {x}, {b}) did not converge: value={val}, error={err}")
    return val


# --- F(Delta, ell) -------------------------------------------------------------

def _f_gamma_terms(Delta, ell, delta, m1, m2):
    """Terms of the alternating-sum form; m1, m2 are the S-R and R-D means."""
    x0 = (Delta - delta) / m1 if Delta >= delta else 0.0
    terms = [np.exp(-Delta / m1)]
    b1 = (delta * delta + delta) / (m1 * m2)
    for i in range(1, ell + 1):
        g = gen_inc_gamma(1, x0, i * b1, rtol=1e-12)
        terms.append(comb(ell, i) * (-1) ** i * np.exp(-(1 / m1 + i / m2) * delta) * g)
    return terms


def _f_integral(Delta, ell, delta, m1, m2):
    """F by direct integration over the S-R gain, no cancellation."""
    if delta <= 0:
        return 0.0
    # relay gains in (Delta, delta] give certain outage
    lead = 0.0
    if Delta < delta:
        lead = np.exp(-max(Delta, 0.0) / m1) * -np.expm1(-(delta - max(Delta, 0.0)) / m1)
    t0 = max(Delta, delta) - delta  # integrate over t = a - delta
    s = delta * (delta + 1) / m2

    def f(t):
        if t <= 0:
            return np.exp(-delta / m1) / m1
        y = delta * (delta + 1 + t) / (m2 * t)
        return (-np.expm1(-y)) ** ell * np.exp(-(delta + t) / m1) / m1

    edges = np.geomspace(max(s * 1e-4, 1e-300), 80 * m1 + 80 * s, 48)
    edges = np.concatenate([[t0], edges[edges > t0]])
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-11, limit=200)[0]
    # beyond the last edge y is s to relative (delta + 1) / t, so the tail is exponential
    T = edges[-1]
    total += (-np.expm1(-delta * (delta + 1 + T) / (m2 * T))) ** ell * np.exp(-(delta + T) / m1)
    return lead + total


@lru_cache(maxsize=200_000)
def _f_cached(Delta, ell, delta, m1, m2, method):
    if ell == 0:
        return 1.0
    if method == "integral":
        return _f_integral(Delta, ell, delta, m1, m2)
    terms = _f_gamma_terms(Delta, ell, delta, m1, m2)
    val = float(np.sum(terms))
    if method == "gamma":
        return val
    # auto: fall back to direct integration once cancellation eats the digits
    if val < 1e-6 * float(np.sum(np.abs(terms))):
        return _f_integral(Delta, ell, delta, m1, m2)
    return val


def f_closed(Delta, ell, params, method="auto"):
    """Pr{a > Delta and ell consecutive relayed outages with the same a}.

    ``method`` is "gamma" for the alternating sum of incomplete gamma
    functions, "integral" for direct integration, or "auto" (gamma unless
    cancellation leaves fewer than six good digits).  F(Delta, 0) is 1.
    """
    if Delta < 0 or ell < 0:
        raise ValueError("Delta and ell must be nonnegative")
    v = params.variances
    return _f_cached(float(Delta), int(ell), float(params.delta),
                     float(params.rho * v.beta1), float(params.rho * v.beta2), method)


def f_tilde(Delta, ell, params):
    """Lower bound on f_closed that ignores the S-R noise: Pr{a>Delta} Pr{b<delta}^ell."""
    if ell == 0:
        return 1.0
    return (1.0 - p_sr_below(Delta, params)) * p_rd_below(params.delta, params) ** ell


# --- single-relay protocols ----------------------------------------------------

def p_out_saf(n, Delta, params, tilde=False):
    """Outage after n rounds of selective AF with one relay and threshold Delta."""
    f = f_tilde if tilde else f_closed
    pw = p_direct(params)
    pa = p_sr_below(Delta, params)
    return pw * sum((pa * pw) ** (n - ell) * f(Delta, ell, params) for ell in range(n + 1))


def p_out_af(n, params, tilde=False):
    """Plain AF: the relay always forwards (threshold 0)."""
    return p_out_saf(n, 0.0, params, tilde)


def p_out_oaf(n, params):
    """Opportunistic AF over m relays: best cascaded SNR forwards each round."""
    return p_direct(params) * f_closed(0.0, n, params) ** params.m


# --- SOAF-A -------------------------------------------------------------------

def _guard(params):
    if params.m * params.N > MAX_ENUMERATION:
        raise ComplexityError(f"m*N = {params.m * params.N} exceeds {MAX_ENUMERATION}")


def calF_recursive(Delta, ell, q, params, f=None):
    """Joint probability that q qualified relays (selected uniformly per round)
    all hold a > Delta and ell relayed rounds fail.

    The per-relay factor is f(Delta, q*z, params) for a relay chosen z times;
    the max of q i.i.d. R-D gains turns z rounds into q*z.  Relays that are
    never selected only contribute Pr{a > Delta}.
    """
    if q < 1 or ell < 0:
        raise ValueError("need q >= 1 and ell >= 0")
    f = f_closed if f is None else f
    pass_a = 1.0 - p_sr_below(Delta, params)

    @lru_cache(maxsize=None)
    def rec(level, zeta):
        if level == 1:
            return f(Delta, q * zeta, params)
        tot = 0.0
        for z in range(zeta + 1):
            mu = (zeta - z == 0) + (z == 0) - (zeta + z == 0)
            tot += comb(zeta, z) * pass_a ** mu * f(Delta, q * (zeta - z), params) * rec(level - 1, z)
        return tot

    return rec(q, ell)


def _g1(Delta, ell, params, tilde):
    if ell == 0:
        return 1.0
    m = params.m
    pa = p_sr_below(Delta, params)
    if tilde:
        pb = p_rd_below(params.delta, params)
        return sum(comb(m, q) * pa ** (m - q) * (1 - pa) ** q * pb ** (q * ell)
                   for q in range(1, m + 1))
    return sum(comb(m, q) * pa ** (m - q) * (1.0 / q) ** ell * calF_recursive(Delta, ell, q, params)
               for q in range(1, m + 1))


def p_out_soaf_a(n, Delta, params, tilde=False):
    """Selective-opportunistic AF, qualified set formed from the source only."""
    _guard(params)
    pw = p_direct(params)
    pam = p_sr_below(Delta, params) ** params.m
    return pw * sum((pam * pw) ** (n - ell) * _g1(Delta, ell, params, tilde) for ell in range(n + 1))


def p_out_soaf_a_tilde(n, Delta, params):
    return p_out_soaf_a(n, Delta, params, tilde=True)


# --- SOAF-B -------------------------------------------------------------------

def _g2(ell, thresholds, params, pass_one):
    """Lower-bound factor for ell relayed rounds of SOAF-B.

    Tracks how many qualified relays sit at each hop count.  The forwarding
    relay is uniformly one of the qualified set, so its hop count h is drawn
    with probability n_h / |Q|; unqualified relays overhearing it join at hop
    h+1 when their R-R gain clears thresholds[h].  Noise accumulation is
    ignored, leaving only Pr{b < delta} per qualified relay per round.
    With ``pass_one`` the clearing probabilities are replaced by 1.
    """
    if ell == 0:
        return 1.0
    m, K = params.m, len(thresholds)
    pb = p_rd_below(params.delta, params)
    pa = p_sr_below(thresholds[0], params)
    pc = [p_rr_below(d, params) for d in thresholds]

    @lru_cache(maxsize=None)
    def rec(i, counts):
        if i > ell:
            return 1.0
        Q = sum(counts)
        free = m - Q
        tot = 0.0
        for h in range(1, K + 1):
            nh = counts[h - 1]
            if nh == 0:
                continue
            if h < K and free > 0:
                p_fail = pc[h]
                p_pass = 1.0 if pass_one else 1.0 - p_fail
                sub = 0.0
                for q in range(free + 1):
                    nxt = list(counts)
                    nxt[h] += q
                    sub += (comb(free, q) * p_fail ** (free - q) * p_pass ** q
                            * pb ** (Q + q) * rec(i + 1, tuple(nxt)))
            else:
                sub = pb ** Q * rec(i + 1, counts)
            tot += nh / Q * sub
        return tot

    p_pass_a = 1.0 if pass_one else 1.0 - pa
    tot = 0.0
    for q in range(1, m + 1):
        start = (q,) + (0,) * (K - 1)
        tot += comb(m, q) * pa ** (m - q) * p_pass_a ** q * pb ** q * rec(2, start)
    return tot


def _soaf_b(n, thresholds, params, pass_one):
    _guard(params)
    thresholds = [float(t) for t in np.atleast_1d(thresholds)]
    if len(thresholds) != params.K:
        raise ValueError(f"need {params.K} thresholds, got {len(thresholds)}")
    pw = p_direct(params)
    pam = p_sr_below(thresholds[0], params) ** params.m
    return pw * sum((pam * pw) ** (n - ell) * _g2(ell, tuple(thresholds), params, pass_one)
                    for ell in range(n + 1))


def p_out_soaf_b_tilde(n, thresholds, params):
    """Lower bound on SOAF-B outage after n rounds for per-hop thresholds."""
    return _soaf_b(n, thresholds, params, pass_one=False)


def p_out_soaf_b_bbss(n, delta_e, v, params):
    """Monotone surrogate of the SOAF-B bound used by the threshold search.

    Thresholds are delta_e * v; the probabilities of clearing a threshold are
    set to 1, which makes the value nondecreasing in delta_e.
    """
    v = np.asarray(v, float)
    return _soaf_b(n, tuple(delta_e * v), params, pass_one=True)


def g2_prime_sum(n, delta_e, v, params):
    """Sum over ell of the relayed-round factors of p_out_soaf_b_bbss (an upper bound)."""
    th = tuple(float(x) for x in delta_e * np.asarray(v, float))
    return sum(_g2(ell, th, params, True) for ell in range(n + 1))


# --- threshold sanity ---------------------------------------------------------

def chain_requirement_holds(thresholds, delta, lam_low):
    """Product test: prod(1 + 1/Delta_i) <= 1 + 1/(lam_low * delta)."""
    th = np.asarray(thresholds, float)
    if lam_low <= 1 or np.any(th <= 0):
        return False
    return bool(np.prod(1.0 + 1.0 / th) <= 1.0 + 1.0 / (lam_low * delta))


def effective_delta(delta, lam_low):
    """Destination-hop threshold implied by thresholds passing chain_requirement_holds.

    A qualified chain then fails only if b is below this value.
    """
    return 1.0 / ((1.0 + 1.0 / delta) / (1.0 + 1.0 / (lam_low * delta)) - 1.0)
