"""Monte Carlo engine for the relaying ARQ protocols.

Trials run in vectorized chunks of ``CHUNK`` packet lifetimes.  Every chunk owns
one random stream per link class, so a run is reproducible from (seed, trials)
alone, whatever the number of worker processes.

The control flow is shared between the outage-level link model in this module
and the packet-level model in :mod:`coop_arq.packet`; both implement the small
``link`` interface used by :func:`run_lifetimes`.

Importance sampling: with ``bias`` < 1 the gains are drawn from a defensive
mixture.  In every round, with probability ``mix``, all S-D/R-D gains that can
affect the round have their mean scaled by ``bias``; otherwise they are
nominal.  The choice is made per round, so any pattern of faded and unfaded
rounds is sampled and the per-round weight stays below 1 / (1 - mix).  With
``mix_relay`` > 0 each relevant S-R/R-R gain is biased the same way, one gain
at a time; this is needed where weak relay-side links dominate (OAF, SAF with
Delta = 0).  The weight of the failure indicator after round n only includes
the draws it depends on.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError
from .fading import substream

CHUNK = 1 << 14
SOURCE = -1
IDLE = -2


class ProtocolKind(str, Enum):
    DIRECT = "direct"  # no relay, source retransmits (baseline)
    AF = "af"
    SAF = "saf"
    OAF = "oaf"
    SOAF_A = "soaf-a"
    SOAF_B = "soaf-b"
    SODF_B = "sodf-b"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for k in cls:
            if k.value == key:
                return k
        raise ConfigError(f"unknown protocol {name!r}")


SINGLE_RELAY = (ProtocolKind.AF, ProtocolKind.SAF)
OVERHEARING = (ProtocolKind.SOAF_B, ProtocolKind.SODF_B)


def normalize_thresholds(kind, thresholds, params):
    """Threshold array of the length the protocol needs (empty if none)."""
    kind = ProtocolKind.parse(kind)
    if kind in (ProtocolKind.DIRECT, ProtocolKind.OAF, ProtocolKind.SODF_B):
        return np.zeros(0)
    if kind == ProtocolKind.AF:
        return np.zeros(1)
    if thresholds is None:
        raise ConfigError(f"{kind.value} needs thresholds")
    th = np.atleast_1d(np.asarray(thresholds, float))
    if th.ndim != 1 or np.any(~np.isfinite(th)) or np.any(th < 0):
        raise ConfigError(f"malformed thresholds {thresholds!r}")
    if kind == ProtocolKind.SOAF_B:
        if len(th) != params.K:
            raise ConfigError(f"soaf-b needs {params.K} thresholds, got {len(th)}")
        return th
    if len(th) != 1:
        raise ConfigError(f"{kind.value} takes a single threshold, got {len(th)}")
    return th


def link_means(params):
    """Mean gains (w, a[m], b[m], c[m, m]) at the SNR of ``params``."""
    v, m, rho = params.variances, params.m, params.rho
    ma = rho * np.broadcast_to(np.asarray(v.beta1, float), (m,))
    mb = rho * np.broadcast_to(np.asarray(v.beta2, float), (m,))
    mc = rho * np.broadcast_to(np.asarray(v.beta3, float), (m, m))
    return rho * v.beta0, ma, mb, mc


@dataclass
class RoundEvent:
    transmitter: int  # -1 source, j >= 0 relay j
    snr: float  # effective SNR at the destination this round
    joined: tuple  # relays that entered the qualified set after this round


@dataclass
class TrialOutcome:
    success: bool
    rounds_used: int
    round_events: list = field(default_factory=list)


@dataclass
class Lifetimes:
    """Raw results of a chunk: first successful round (N+1 if none) and log weights."""
    first: np.ndarray
    logw: np.ndarray
    tx: np.ndarray = None
    snr: np.ndarray = None
    joined: np.ndarray = None


class OutageLink:
    """Outage-level link model: success iff the effective SNR reaches delta.

    Each relay keeps sum(log1p(1/g)) over the gains of its stored chain, which
    gives the multi-hop AF SNR without cancellation.  Decode-and-forward relays
    store an empty chain once they decode.
    """

    def __init__(self, params, T, harq=False, df=False):
        self.delta = params.delta
        self.harq = harq
        self.df = df
        self.chain = np.full((T, params.m), np.inf)
        self.acc = np.zeros(T)

    def _finish(self, idx, snr):
        if self.harq:
            self.acc[idx] += snr
            snr_eff = self.acc[idx]
        else:
            snr_eff = snr
        return snr_eff >= self.delta, snr

    def source_round(self, idx, w):
        return self._finish(idx, w)

    def relay_round(self, idx, active, b):
        with np.errstate(divide="ignore"):
            s = self.chain[idx, active] + np.log1p(1.0 / b)
            snr = 1.0 / np.expm1(s)
        return self._finish(idx, snr)

    def hear_source(self, idx, mask, a):
        """Relays in mask[t, j] receive the source packet; returns decode flags."""
        t, j = np.nonzero(mask)
        g = a[t, j]
        ok = g >= self.delta
        with np.errstate(divide="ignore"):
            self.chain[idx[t], j] = np.where(self.df & ok, 0.0, np.log1p(1.0 / g))
        out = np.zeros(mask.shape, bool)
        out[t, j] = ok
        return out

    def hear_relay(self, idx, active, mask, c):
        t, j = np.nonzero(mask)
        g = c[t, j]
        ok = g >= self.delta
        with np.errstate(divide="ignore"):
            new = self.chain[idx[t], active[t]] + np.log1p(1.0 / g)
            self.chain[idx[t], j] = np.where(self.df & ok, 0.0, new)
        out = np.zeros(mask.shape, bool)
        out[t, j] = ok
        return out


DEFAULT_MIX = 0.5
DEFAULT_MIX_RELAY = 0.2


def _log_ratio(x, bias):
    """log of Exp(bias) over Exp(1) density at unit-mean-normalised x."""
    return -np.log(bias) - (1.0 / bias - 1.0) * x


def _draw_block(stream, mean, rel, bias, on, shape):
    """Gains of one round; rows with ``on`` draw their ``rel`` entries biased.

    Returns the gains and, per row, the summed log density ratio over ``rel``.
    """
    e = stream.standard_exponential(shape)
    if bias == 1.0:
        return mean * e, 0.0
    x = np.where(rel & on.reshape((shape[0],) + (1,) * (len(shape) - 1)), bias * e, e)
    lr = np.where(rel, _log_ratio(x, bias), 0.0).reshape(shape[0], -1).sum(axis=1)
    return mean * x, lr


def _draw_each(stream, mean, rel, bias, mixer, mix, shape):
    """Gains with a per-entry mixture; returns the gains and per-row log(p / q)."""
    e = stream.standard_exponential(shape)
    if bias == 1.0 or mix == 0.0:
        return mean * e, 0.0
    x = np.where(rel & (mixer.random(shape) < mix), bias * e, e)
    lq = np.logaddexp(np.log1p(-mix), np.log(mix) + _log_ratio(x, bias))
    return mean * x, -np.where(rel, lq, 0.0).reshape(shape[0], -1).sum(axis=1)


def run_lifetimes(kind, params, thresholds, T, seed, chunk, link, bias=1.0, mix=DEFAULT_MIX,
                  mix_relay=DEFAULT_MIX_RELAY, record=False):
    """Run T packet lifetimes of one chunk through ``link``.

    Rounds are numbered 0..N; round 0 is the source broadcast.
    """
    kind = ProtocolKind.parse(kind)
    th = normalize_thresholds(kind, thresholds, params)
    m, N, K = params.m, params.N, params.K
    mw, ma, mb, mc = link_means(params)
    s_sd, s_sr = substream(seed, chunk, "sd"), substream(seed, chunk, "sr")
    s_rd, s_rr = substream(seed, chunk, "rd"), substream(seed, chunk, "rr")

    qual = np.zeros((T, m), bool)
    hop = np.zeros((T, m), int)
    a_frozen = np.zeros((T, m))
    done = np.zeros(T, bool)
    first = np.full(T, N + 1)
    if not 0.0 < bias <= 1.0 or not 0.0 <= mix < 1.0 or not 0.0 <= mix_relay < 1.0:
        raise ValueError("need 0 < bias <= 1 and mixture weights in [0, 1)")
    mixer = substream(seed, chunk, "mix")
    loglr = np.zeros(T)
    # the failure indicator after round n depends on S-D/R-D gains of rounds 0..n
    # and on S-R/R-R gains of rounds 0..n-1; weights only include those draws
    lr_round = np.zeros((T, N + 1))
    if record:
        tx = np.full((T, N + 1), IDLE)
        snr_rec = np.full((T, N + 1), np.nan)
        joined = np.zeros((T, N + 1, m), bool)
    relay_ids = np.arange(m)
    only0 = relay_ids == 0

    for r in range(N + 1):
        live = ~done
        have_q = qual.any(axis=1)
        if kind == ProtocolKind.DIRECT:
            src = live.copy()
        elif kind == ProtocolKind.OAF:
            src = live & (r == 0)
        else:
            src = live & ~have_q
        rel = live & ~src
        listen = r < N  # nothing heard in the last round can matter

        # relays that may qualify from a source transmission this round
        if kind in SINGLE_RELAY:
            cand_a = src[:, None] & ~qual & only0
        elif kind in (ProtocolKind.DIRECT,):
            cand_a = np.zeros((T, m), bool)
        else:
            cand_a = src[:, None] & ~qual
        cand_a &= listen

        # forwarding members and the active relay
        member = np.ones((T, m), bool) if kind == ProtocolKind.OAF else qual
        rel_b = rel[:, None] & member

        on = mixer.random(T) < mix
        w, lr_w = _draw_block(s_sd, mw, src, bias, on, (T,))
        a, lr_a = _draw_each(s_sr, ma, cand_a, bias, mixer, mix_relay, (T, m))
        b, lr_b = _draw_block(s_rd, mb, rel_b, bias, on, (T, m))
        if bias < 1.0:
            # one mixture decision covers the whole round
            lr_dest = lr_w + lr_b
            loglr -= np.where(src | rel_b.any(axis=1),
                              np.logaddexp(np.log1p(-mix),
                                           np.log(mix) + lr_dest if mix > 0 else -np.inf), 0.0)
        if kind == ProtocolKind.OAF:
            score = a_frozen * b / (a_frozen + b + 1.0)
        else:
            score = b
        active = np.argmax(np.where(member, score, -np.inf), axis=1)

        cand_c = np.zeros((T, m, m), bool)
        if kind in OVERHEARING and listen:
            can = ~qual
            if kind == ProtocolKind.SOAF_B:
                can &= (hop[np.arange(T), active] < K)[:, None]
            cand_c[np.arange(T), active] = rel[:, None] & can
        c, lr_c = _draw_each(s_rr, mc, cand_c, bias, mixer, mix_relay, (T, m, m))
        lr_round[:, r] = loglr
        loglr += lr_a + lr_c

        # destination
        ok = np.zeros(T, bool)
        snr_now = np.zeros(T)
        i_src = np.nonzero(src)[0]
        if len(i_src):
            ok[i_src], snr_now[i_src] = link.source_round(i_src, w[i_src])
        i_rel = np.nonzero(rel)[0]
        if len(i_rel):
            act = active[i_rel]
            ok[i_rel], snr_now[i_rel] = link.relay_round(i_rel, act, b[i_rel, act])
        newly = ok & live
        first[newly] = r
        if record:
            tx[src, r] = SOURCE
            tx[rel, r] = active[rel]
            snr_rec[live, r] = snr_now[live]
        done |= newly
        if not listen:
            break

        # qualification updates for packets still alive
        alive = ~done
        before = qual.copy()
        cand_a &= alive[:, None]
        i_a = np.nonzero(cand_a.any(axis=1))[0]
        if len(i_a):
            sub = cand_a[i_a]
            if kind == ProtocolKind.SODF_B:
                dec = link.hear_source(i_a, sub, a[i_a])
                qual[i_a] |= dec
            else:
                thr = th[0] if len(th) else 0.0
                passed = sub & (a[i_a] > thr)
                if kind == ProtocolKind.OAF:
                    passed = sub
                    a_frozen[i_a] = a[i_a]
                link.hear_source(i_a, passed, a[i_a])
                qual[i_a] |= passed
            hop[i_a] = np.where(qual[i_a] & ~before[i_a], 1, hop[i_a])

        if kind in OVERHEARING:
            cand = cand_c[np.arange(T), active] & alive[:, None]
            i_c = np.nonzero(cand.any(axis=1))[0]
            if len(i_c):
                sub = cand[i_c]
                act = active[i_c]
                cc = c[i_c, act]
                if kind == ProtocolKind.SODF_B:
                    passed = link.hear_relay(i_c, act, sub, cc)
                else:
                    h = hop[i_c, act]
                    passed = sub & (cc > th[h][:, None])
                    link.hear_relay(i_c, act, passed, cc)
                qual[i_c] |= passed
                hop[i_c] = np.where(passed, (hop[i_c, act] + 1)[:, None], hop[i_c])
        if record:
            joined[:, r] = qual & ~before

    logw = lr_round
    out = Lifetimes(first, logw)
    if record:
        out.tx, out.snr, out.joined = tx, snr_rec, joined
    return out


def _outcome(lt, i, N):
    events = []
    for r in range(N + 1):
        if lt.tx[i, r] == IDLE:
            break
        events.append(RoundEvent(int(lt.tx[i, r]), float(lt.snr[i, r]),
                                 tuple(np.nonzero(lt.joined[i, r])[0].tolist())))
    ok = lt.first[i] <= N
    return TrialOutcome(bool(ok), int(lt.first[i]) if ok else N, events)


def _seed_of(rng):
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(2 ** 63))
    return int(rng)


def run_outage_trial(kind, params, thresholds, rng, harq=False):
    """One packet lifetime at outage level.  ``rng`` is a seed or a Generator."""
    kind = ProtocolKind.parse(kind)
    link = OutageLink(params, 1, harq=harq, df=kind == ProtocolKind.SODF_B)
    lt = run_lifetimes(kind, params, thresholds, 1, _seed_of(rng), 0, link, record=True)
    return _outcome(lt, 0, params.N)


def run_harq_outage_trial(kind, params, thresholds, rng):
    """As run_outage_trial with the destination adding up effective SNRs."""
    return run_outage_trial(kind, params, thresholds, rng, harq=True)


@dataclass
class CurveEstimate:
    """Failure probability after each round n = 0..N with 3-sigma half-widths."""
    prob: np.ndarray
    ci: np.ndarray
    failures: np.ndarray
    trials: int

    def at(self, n):
        return float(self.prob[n]), float(self.ci[n])

    @property
    def low_confidence(self):
        return self.failures < 100


def _chunk_sizes(trials):
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n_full, rest = divmod(int(trials), CHUNK)
    return [CHUNK] * n_full + ([rest] if rest else [])


def chunk_sums(first, logw, N):
    """Weighted failure sums (S1, S2, count) after each round for one chunk."""
    fails = first[:, None] > np.arange(N + 1)[None, :]
    w = np.exp(logw)
    if w.ndim == 1:
        w = w[:, None]
    return (np.sum(w * fails, axis=0), np.sum(w * w * fails, axis=0), fails.sum(axis=0))


def reduce_sums(parts, trials):
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    cnt = sum(p[2] for p in parts)
    prob = s1 / trials
    var = np.maximum(s2 / trials - prob ** 2, 0.0) / trials
    return CurveEstimate(prob, 3.0 * np.sqrt(var), cnt, trials)


def _outage_chunk(job):
    kind, params, thresholds, T, seed, chunk, harq, bias, mix, mix_relay = job
    link = OutageLink(params, T, harq=harq, df=kind == ProtocolKind.SODF_B)
    lt = run_lifetimes(kind, params, thresholds, T, seed, chunk, link, bias=bias, mix=mix,
                       mix_relay=mix_relay)
    return chunk_sums(lt.first, lt.logw, params.N)


def map_chunks(fn, jobs, workers):
    """Evaluate jobs in order; results come back in chunk order either way."""
    if workers <= 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(fn, jobs))


def estimate_outage(kind, params, thresholds=None, trials=100_000, seed=0,
                    harq=False, bias=1.0, mix=DEFAULT_MIX, mix_relay=DEFAULT_MIX_RELAY, workers=1):
    """Outage probability after every round from ``trials`` packet lifetimes."""
    kind = ProtocolKind.parse(kind)
    normalize_thresholds(kind, thresholds, params)
    jobs = [(kind, params, thresholds, T, seed, i, harq, bias, mix, mix_relay)
            for i, T in enumerate(_chunk_sizes(trials))]
    return reduce_sums(map_chunks(_outage_chunk, jobs, workers), trials)


def suggested_bias(params):
    """Bias that puts destination-link means near the decoding threshold."""
    v = params.variances
    beta = min(float(np.min(v.beta0)), float(np.min(v.beta2)))
    return float(min(1.0, params.delta / (params.rho * beta)))
