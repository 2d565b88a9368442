"""Threshold assignment for the selective relaying protocols.

Thresholds are expressed as Delta_e * v with a fixed ratio vector v.  The
search finds, per average SNR, the smallest Delta_e for which the dominant
union-bound term of a qualified k-hop relay stays below the end-to-end
outage surrogate, for every hop count k.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, SearchError
from .outage import p_direct, p_out_saf, p_out_soaf_b_bbss, qfunc
from .tcm import distance_spectrum, get_code

DEFAULT_V = (1.0, 2.0, 3.0)
DEFAULT_EPS0 = 1e-5


def psi_k(deltas):
    """(prod(1 + 1/Delta_i) - 1)**-1, a lower bound on a qualified chain's SNR."""
    d = np.atleast_1d(np.asarray(deltas, float))
    if d.size == 0 or np.any(~(d > 0)):
        raise ValueError("psi_k needs strictly positive thresholds")
    return float(1.0 / np.expm1(np.sum(np.log1p(1.0 / d))))


@dataclass(frozen=True)
class CodeMetrics:
    """Dominant spectrum line of a code: d_m**2, its multiplicity per codeword, eps0."""
    d2: float
    omega_dm: float
    eps0: float = DEFAULT_EPS0

    def __post_init__(self):
        if not 0 < self.eps0 < self.d2:
            raise ConfigError("need 0 < eps0 < d_m^2")
        if not self.omega_dm > 0:
            raise ConfigError("multiplicity must be positive")

    @property
    def d2_eps(self):
        return (self.d2 - self.eps0) ** 2 / self.d2

    @staticmethod
    def tau(rho):
        return 1.0 / np.log(rho) ** 2

    @classmethod
    def from_code(cls, code, eps0=DEFAULT_EPS0):
        """Metrics of a trellis code; the per-step multiplicity is scaled by L."""
        code = get_code(code) if isinstance(code, str) else code
        sp = distance_spectrum(code)
        return cls(sp.d2_min, sp.omega_min * sp.L, eps0)


# --- asymptotic conditions -------------------------------------------------------

@dataclass
class ConditionReport:
    rho_db: np.ndarray
    ratio: np.ndarray  # ln Delta / ln rho along the ladder
    limit: float
    passed: bool


def check_condition_31(schedule, rho_db=None, tol=1e-2):
    """Does ln Delta(rho) / ln rho vanish as rho grows?

    ``schedule`` maps linear rho to a positive threshold (scalar or vector; every
    entry is tested and the worst is reported).  The limit is extrapolated by
    regressing ln Delta on [ln rho, ln ln rho, 1], which is exact for
    schedules of the form c * rho**alpha * (ln rho)**beta.
    """
    rho_db = np.arange(10.0, 201.0, 10.0) if rho_db is None else np.asarray(rho_db, float)
    if len(rho_db) < 4:
        raise ValueError("need at least four ladder points")
    rho = 10.0 ** (rho_db / 10.0)
    if np.any(rho <= 1):
        raise ValueError("ladder must stay above 0 dB")
    try:
        vals = np.array([np.atleast_1d(np.asarray(schedule(r), float)) for r in rho])
    except Exception as exc:  # noqa: BLE001 - the schedule is user supplied
        raise NumericalError(f"schedule could not be evaluated: {exc}") from exc
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise NumericalError("schedule must stay positive and finite")
    lr = np.log(rho)
    X = np.column_stack([lr, np.log(lr), np.ones_like(lr)])
    coef = np.linalg.lstsq(X, np.log(vals), rcond=None)[0]
    limits = coef[0]
    worst = int(np.argmax(np.abs(limits)))
    ratio = np.log(vals[:, worst]) / lr
    limit = float(limits[worst])
    return ConditionReport(rho_db, ratio, limit, abs(limit) <= tol)


def log_growth_rhs(k, m, N, metrics):
    """Required lower limit of psi_k / ln rho."""
    return 4.0 / metrics.d2_eps * (m * (N - k + 1) - 1)


def min_lambda_log_scale(m, N, v, metrics):
    """Smallest lambda_e such that lambda_e * v * ln(rho) meets log_growth_rhs for every k."""
    v = np.asarray(v, float)
    K = min(m, N)
    if len(v) < K or np.any(v <= 0):
        raise ConfigError(f"need {K} positive ratios")
    terms = [log_growth_rhs(k, m, N, metrics) * np.sum(1.0 / v[:k]) for k in range(1, K + 1)]
    return float(max(terms))


def log_scale_thresholds(rho, m, N, v, metrics):
    """Thresholds lambda_e * v * ln(rho)."""
    v = np.asarray(v, float)[:min(m, N)]
    return min_lambda_log_scale(m, N, v, metrics) * v * np.log(rho)


# --- hop-threshold search -------------------------------------------------------------

def _check_v(v, params):
    v = np.asarray(v, float)
    if len(v) < params.K or np.any(~(v > 0)):
        raise ConfigError(f"need {params.K} positive ratios, got {v!r}")
    return v[:params.K]


def alg1_condition_lhs(k, delta_e, v, metrics, params, n_ref=None):
    """Left side of the k-th search condition at Delta_e (compared to alg1_rhs)."""
    if not delta_e > 0:
        raise ValueError("Delta_e must be positive")
    v = _check_v(v, params)
    if not 1 <= k <= params.K:
        raise ValueError(f"k must lie in 1..{params.K}")
    N = params.N if n_ref is None else n_ref
    var = params.variances
    psi = psi_k(delta_e * v[:k])
    d2e = metrics.d2_eps
    spread = v[0] / var.beta1 + np.sum(v[1:k]) / var.beta3
    q = qfunc(np.sqrt(d2e * psi / 2.0))
    lhs = (metrics.omega_dm / params.m ** (N - k) * q / params.rho
           * (4.0 * delta_e / (d2e * psi) + delta_e) * spread)
    return float(lhs * p_out_soaf_b_bbss(k - 1, delta_e, v, params))


def alg1_rhs(delta_e, v, params):
    return float(p_out_soaf_b_bbss(params.N, delta_e, _check_v(v, params), params))


def _holds(k, x, v, metrics, params):
    return alg1_condition_lhs(k, x, v, metrics, params) <= alg1_rhs(x, v, params)


def _smallest(pred, start=1e-3, upper=1e9, rtol=1e-6, floor=1e-12):
    """Smallest x > 0 with pred(x): geometric bracket, then bisection."""
    lo = start
    if pred(lo):
        hi = lo
        while pred(lo):
            lo *= 0.5
            if lo < floor:
                return hi
            hi = lo * 2.0
    else:
        hi = lo * 2.0
        while not pred(hi):
            lo = hi
            hi *= 2.0
            if hi > upper:
                raise SearchError(f"no bracket below {upper:g}")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class SearchResult:
    delta_e: float
    per_k: np.ndarray
    thresholds: np.ndarray


def find_delta_e_star(v, metrics, params, rtol=1e-6):
    """Smallest Delta_e meeting every hop condition; thresholds are Delta_e * v."""
    v = _check_v(v, params)
    per_k = []
    for k in range(1, params.K + 1):
        try:
            per_k.append(_smallest(lambda x: _holds(k, x, v, metrics, params), rtol=rtol))
        except SearchError as exc:
            raise SearchError(f"k={k}, rho={params.rho:g}: {exc}") from exc
    d = max(per_k)
    return SearchResult(d, np.array(per_k), d * v)


def alg1_schedule(v, metrics, params):
    """Callable rho -> Delta_e,*(rho) for use with check_condition_31."""
    return lambda rho: find_delta_e_star(v, metrics, params.at(rho)).delta_e


# --- single relay rule ---------------------------------------------------------

def saf_limit_bound(Delta, metrics, params):
    """Pr{E_sd} times the dominant union-bound term of a qualified one-hop relay."""
    d2e = metrics.d2_eps
    q = qfunc(np.sqrt(d2e * Delta / 2.0))
    term = metrics.omega_dm * q / params.rho * (4.0 / (d2e * Delta) + 1.0) * Delta / params.variances.beta1
    return float(p_direct(params) * term)


def saf_threshold(metrics, params, alpha=1.0):
    """Smallest Delta with the single-relay limit below alpha times the final outage."""
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    return _smallest(lambda x: saf_limit_bound(x, metrics, params)
                     <= alpha * p_out_saf(params.N, x, params.at(m=1)))
