"""Packet-level simulation: coded packets, AF forwarding and Viterbi decoding.

The protocol control flow is the one of :func:`coop_arq.protocols.run_lifetimes`;
:class:`PacketLink` replaces the SNR test of the outage model by real
baseband processing.  A round succeeds when the destination decodes every
information bit (ideal error detection).
"""
from dataclasses import dataclass

import numpy as np

from .fading import substream
from .outage import p_sr_below
from .protocols import (DEFAULT_MIX, DEFAULT_MIX_RELAY, ProtocolKind, _outcome, _seed_of, chunk_sums, map_chunks,
                        normalize_thresholds, reduce_sums, run_lifetimes)
from .tcm import (RelayedObservation, af_relay_forward, encode, get_code, viterbi_mlsd)

CHUNK = 1 << 10


def _resolve(code):
    return get_code(code) if isinstance(code, str) else code


class PacketLink:
    """Baseband link model for T packet lifetimes of one chunk.

    Every relay keeps the observation it stored when it qualified; an AF relay
    forwards it scaled to unit power, a DF relay that decoded stores the clean
    codeword.  With ``harq`` the destination keeps the running MRC statistic.
    """

    def __init__(self, code, params, T, seed, chunk, harq=False, df=False):
        code = _resolve(code)
        self.code, self.harq, self.df = code, harq, df
        n, m = code.n_symbols, params.m
        self.bits = substream(seed, chunk, "bits").integers(0, 2, (T, code.n_bits), dtype=np.int8)
        self.x = encode(code, self.bits)
        self.s_phase = substream(seed, chunk, "phase")
        self.s_nd = substream(seed, chunk, "noise_d")
        self.s_nr = substream(seed, chunk, "noise_r")
        self.y = np.zeros((T, m, n), complex)
        self.g = np.zeros((T, m), complex)
        self.v = np.ones((T, m))
        if harq:
            self.z = np.zeros((T, n), complex)
            self.G = np.zeros(T)

    def _send(self, obs, gain, noise_stream):
        phase = self.s_phase.uniform(0.0, 2 * np.pi, len(gain))
        return af_relay_forward(obs, gain, phase, rng=noise_stream)

    def _decoded(self, obs, rows):
        return np.all(viterbi_mlsd(obs, self.code) == self.bits[rows], axis=1)

    def _finish(self, idx, obs):
        snr = obs.snr
        if self.harq:
            wgt = np.conj(obs.cascade) / obs.noise_var
            self.z[idx] += wgt[:, None] * obs.samples
            self.G[idx] += snr
            rt = np.sqrt(self.G[idx])
            safe = np.where(rt > 0, rt, 1.0)
            obs = RelayedObservation(self.z[idx] / safe[:, None], rt.astype(complex),
                                     np.ones(len(idx)))
        return self._decoded(obs, idx), snr

    def _stored(self, rows, relays):
        return RelayedObservation(self.y[rows, relays], self.g[rows, relays], self.v[rows, relays])

    def _store(self, rows, relays, obs):
        ok = np.ones(len(rows), bool)
        if self.df:
            ok = self._decoded(obs, rows)
        self.y[rows, relays] = obs.samples
        self.g[rows, relays] = obs.cascade
        self.v[rows, relays] = obs.noise_var
        if ok.any():
            r, j = rows[ok], relays[ok]
            if self.df:
                self.y[r, j] = self.x[r]
                self.g[r, j] = 1.0
                self.v[r, j] = 0.0
        return ok

    def source_round(self, idx, w):
        return self._finish(idx, self._send(self.x[idx], w, self.s_nd))

    def relay_round(self, idx, active, b):
        return self._finish(idx, self._send(self._stored(idx, active), b, self.s_nd))

    def hear_source(self, idx, mask, a):
        t, j = np.nonzero(mask)
        out = np.zeros(mask.shape, bool)
        if len(t):
            rows = idx[t]
            obs = self._send(self.x[rows], a[t, j], self.s_nr)
            out[t, j] = self._store(rows, j, obs)
        return out

    def hear_relay(self, idx, active, mask, c):
        t, j = np.nonzero(mask)
        out = np.zeros(mask.shape, bool)
        if len(t):
            rows = idx[t]
            obs = self._send(self._stored(rows, active[t]), c[t, j], self.s_nr)
            out[t, j] = self._store(rows, j, obs)
        return out


def run_per_trial(kind, code, params, thresholds, rng, harq=False):
    """One packet lifetime at packet level.  ``rng`` is a seed or a Generator."""
    kind = ProtocolKind.parse(kind)
    seed = _seed_of(rng)
    link = PacketLink(code, params, 1, seed, 0, harq=harq, df=kind == ProtocolKind.SODF_B)
    lt = run_lifetimes(kind, params, thresholds, 1, seed, 0, link, record=True)
    return _outcome(lt, 0, params.N)


def run_harq_per_trial(kind, code, params, thresholds, rng):
    return run_per_trial(kind, code, params, thresholds, rng, harq=True)


def _chunk_sizes(trials):
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n_full, rest = divmod(int(trials), CHUNK)
    return [CHUNK] * n_full + ([rest] if rest else [])


def _per_chunk(job):
    kind, code, params, thresholds, T, seed, chunk, harq, bias, mix, mix_relay = job
    link = PacketLink(code, params, T, seed, chunk, harq=harq, df=kind == ProtocolKind.SODF_B)
    lt = run_lifetimes(kind, params, thresholds, T, seed, chunk, link, bias=bias, mix=mix,
                       mix_relay=mix_relay)
    return chunk_sums(lt.first, lt.logw, params.N)


def estimate_per(kind, code, params, thresholds=None, trials=10_000, seed=0,
                 harq=False, bias=1.0, mix=DEFAULT_MIX, mix_relay=DEFAULT_MIX_RELAY, workers=1):
    """Packet error rate after every round n = 0..N from ``trials`` lifetimes."""
    kind = ProtocolKind.parse(kind)
    normalize_thresholds(kind, thresholds, params)
    code = _resolve(code)
    jobs = [(kind, code.name, params, thresholds, T, seed, i, harq, bias, mix, mix_relay)
            for i, T in enumerate(_chunk_sizes(trials))]
    return reduce_sums(map_chunks(_per_chunk, jobs, workers), trials)


# --- selective AF by conditioning ------------------------------------------------

@dataclass
class SafPerEstimate:
    """PER of single-relay selective AF assembled from independently estimated parts.

    p_sd: direct-link PER; relay_fail[l]: Pr{relay rounds 1..l all fail | a > Delta}.
    """
    prob: np.ndarray
    ci: np.ndarray
    p_sd: float
    relay_fail: np.ndarray
    failures: np.ndarray
    trials: int

    def at(self, n):
        return float(self.prob[n]), float(self.ci[n])


SAF_MIX = 0.5


def _mixture_draw(stream, mixer, mean, near, T):
    """Exp(mean) draws mixed half and half with Exp(near); returns draws and log(p / q)."""
    e = stream.standard_exponential(T)
    if near >= mean:
        return mean * e, np.zeros(T)
    x = np.where(mixer.random(T) < SAF_MIX, near * e, mean * e)
    lp = -np.log(mean) - x / mean
    lq = np.logaddexp(np.log1p(-SAF_MIX) + lp, np.log(SAF_MIX) - np.log(near) - x / near)
    return x, lp - lq


def _saf_parts(job):
    code, params, Delta, T, seed, chunk, importance = job
    code = get_code(code)
    N = params.N
    link = PacketLink(code, params.at(m=1), T, seed, chunk)
    rows = np.arange(T)
    ones = np.zeros(T, int)
    s_sd, s_sr, s_rd = (substream(seed, chunk, k) for k in ("sd", "sr", "rd"))
    mixer = substream(seed, chunk, "mix")
    rho, v = params.rho, params.variances
    # near-threshold scale: the relay-noise floor lives within a few delta of Delta
    near = 2.0 * max(params.delta, 1e-3) if importance else np.inf
    # direct link
    w = rho * v.beta0 * s_sd.standard_exponential(T)
    sd_fail = ~link._finish(rows, link._send(link.x, w, link.s_nd))[0]
    # relay rounds given a qualified relay; a - Delta is again exponential
    t, lw = _mixture_draw(s_sr, mixer, rho * v.beta1, near, T)
    a = max(Delta, 0.0) + t
    link.hear_source(rows, np.ones((T, 1), bool), a[:, None])
    alive = np.ones(T, bool)
    X = np.zeros((T, N))  # weighted indicator of failing relay rounds 1..l
    for ell in range(1, N + 1):
        b, lb = _mixture_draw(s_rd, mixer, rho * v.beta2, near, T)
        lw = lw + lb
        i = np.nonzero(alive)[0]
        if len(i):
            ok, _ = link.relay_round(i, ones[i], b[i])
            alive[i[ok]] = False
        X[:, ell - 1] = np.where(alive, np.exp(lw), 0.0)
    raw = np.array([T] + [np.count_nonzero(X[:, l]) for l in range(N)])
    return sd_fail.sum(), X.sum(axis=0), X.T @ X, raw


def estimate_saf_per(code, params, Delta, trials=100_000, seed=0, importance=False, workers=1):
    """Selective AF PER after rounds 0..N via the round decomposition.

    With P_sd the direct-link PER and F(l) = Pr{a > Delta} Pr{l relay rounds fail | a > Delta},
    the PER after n rounds is P_sd * sum_l (Pr{a <= Delta} P_sd)**(n-l) F(l), F(0) = 1.
    Both factors are estimated from ``trials`` samples each, which keeps the relative
    error bounded when the end-to-end PER is far below 1/trials.  With ``importance``
    the relay factor draws a - Delta and the relay-destination gains from a half and
    half mixture of their law and Exp(2 delta), which puts samples where a relay that
    just qualified forwards too much noise.
    """
    code = _resolve(code)
    N = params.N
    jobs = [(code.name, params, Delta, T, seed, i, bool(importance))
            for i, T in enumerate(_chunk_sizes(trials))]
    parts = map_chunks(_saf_parts, jobs, workers)
    sd_fail = sum(p[0] for p in parts)
    S1 = sum(p[1] for p in parts)
    M = sum(p[2] for p in parts)
    fails = sum(p[3] for p in parts)
    p_sd = sd_fail / trials
    q = np.concatenate([[1.0], S1 / trials])
    pa_below = p_sr_below(Delta, params)
    F = np.concatenate([[1.0], (1.0 - pa_below) * q[1:]])
    prob = np.zeros(N + 1)
    grad_sd = np.zeros(N + 1)
    for n in range(N + 1):
        terms = [(pa_below * p_sd) ** (n - l) * F[l] for l in range(n + 1)]
        prob[n] = p_sd * sum(terms)
        grad_sd[n] = sum((n - l + 1) * t for l, t in enumerate(terms))
    # delta method; the direct-link and relay sample sets are independent
    var = grad_sd ** 2 * p_sd * (1 - p_sd) / trials
    # the relay part is linear in the weighted indicators X_l
    cov = M / trials - np.outer(q[1:], q[1:])
    for n in range(1, N + 1):
        c = np.array([p_sd * (pa_below * p_sd) ** (n - l) * (1.0 - pa_below) if l <= n else 0.0
                      for l in range(1, N + 1)])
        var[n] += max(float(c @ cov @ c), 0.0) / trials
    return SafPerEstimate(prob, 3.0 * np.sqrt(var), p_sd, q, fails, trials)
