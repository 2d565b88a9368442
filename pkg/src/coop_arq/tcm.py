"""Trellis-coded modulation over AF relay chains.

Codes
-----
``rate-1``  4-state [5, 7] convolutional code, Gray QPSK (one bit per I/Q rail)
``rate-2``  4-state Ungerboeck code (h1=2, h0=5), 8PSK, natural labels
``rate-3``  8-state Ungerboeck code (h2=04, h1=02, h0=11), 16QAM
``rate-4``  same code, 32-point cross constellation
``rate-5``  same code, 64QAM

QAM labels follow set partitioning of the integer lattice: with a point
(x, y) on odd coordinates and p = ((x-1)/2, (y-1)/2), label bit z0 picks the
checkerboard coset (p_x + p_y mod 2), z1 the coset of 2Z^2 (p_x mod 2) and z2 the
coset of 2RZ^2; the remaining (uncoded) bits pick a point inside the subset.
8PSK uses natural labels, which partition the same way.  All constellations
have unit average energy.

A trellis step consumes R information bits: ``k_coded`` bits drive the encoder
and select a subset, the other bits select a point inside it (parallel
transitions).  Codewords end with a zero tail that returns the encoder to
state 0; tail symbols carry no information.
"""
import heapq
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .errors import ConfigError, ComplexityError
from .outage import qfunc

DEFAULT_L = 130


@dataclass(frozen=True, eq=False)
class TrellisCode:
    name: str
    R: int
    k_coded: int
    num_states: int
    next_state: np.ndarray  # (S, 2**k_coded)
    subset: np.ndarray  # (S, 2**k_coded) -> subset index
    subsets: np.ndarray  # (n_subsets, 2**k_uncoded) -> constellation index
    constellation: np.ndarray  # complex, unit average energy
    tail: np.ndarray  # (S,) coded input used while terminating
    tail_len: int
    generator: str = ""
    L: int = DEFAULT_L

    @property
    def k_uncoded(self):
        return self.R - self.k_coded

    @property
    def n_symbols(self):
        """Transmitted symbols per codeword, tail included."""
        return self.L + self.tail_len

    @property
    def n_bits(self):
        return self.R * self.L

    def with_length(self, L):
        return TrellisCode(self.name, self.R, self.k_coded, self.num_states, self.next_state,
                           self.subset, self.subsets, self.constellation, self.tail,
                           self.tail_len, self.generator, int(L))


# --- constellations -----------------------------------------------------------

def _qam_points(levels, drop_corners=0):
    vals = np.arange(-levels + 1, levels, 2)
    pts = [(x, y) for x in vals for y in vals
           if not (drop_corners and abs(x) >= drop_corners and abs(y) >= drop_corners)]
    return np.array(pts)


def _lattice_label(pts):
    px = (pts[:, 0] - 1) // 2
    py = (pts[:, 1] - 1) // 2
    z0 = (px + py) % 2
    z1 = px % 2
    z2 = ((px - px % 2) // 2 + (py - py % 2) // 2) % 2
    return z0 + 2 * z1 + 4 * z2


def _partitioned(points, labels, n_subsets):
    """Unit-energy constellation and the (n_subsets, size) index table."""
    pts = points[:, 0] + 1j * points[:, 1] if points.ndim == 2 else points
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    table = np.array([np.nonzero(labels == s)[0] for s in range(n_subsets)])
    return pts.astype(complex), table


def qam_set_partition(name):
    """Constellation and 8-way set partition for 16QAM, 32-cross or 64QAM."""
    pts = {"16qam": _qam_points(4), "32cross": _qam_points(6, drop_corners=5),
           "64qam": _qam_points(8)}[name]
    return _partitioned(pts, _lattice_label(pts), 8)


# --- encoders -------------------------------------------------------------------

def _feedforward_trellis(gens, memory):
    """Rate-1/n feedforward code; state holds the last ``memory`` input bits."""
    S = 1 << memory
    nxt = np.zeros((S, 2), int)
    out = np.zeros((S, 2), int)
    for s in range(S):
        for u in (0, 1):
            reg = (u << memory) | s  # newest bit on the left
            bits = [bin(reg & g).count("1") & 1 for g in gens]
            out[s, u] = sum(b << i for i, b in enumerate(bits))
            nxt[s, u] = reg >> 1
    return nxt, out


def _systematic_feedback_trellis(h, nu):
    """Ungerboeck systematic feedback encoder from parity checks h = [h0, h1, ..].

    Observer form with registers S_1..S_nu: z0 = S_1, and
    S_k <- T_k xor S_{k+1}, with T_k = h0_k z0 xor sum_i hi_k z_i.
    Returns next-state and (z_kc .. z1 z0) label tables over coded inputs.
    """
    kc = len(h) - 1
    S = 1 << nu
    nxt = np.zeros((S, 1 << kc), int)
    out = np.zeros((S, 1 << kc), int)
    for s in range(S):
        reg = [(s >> (k - 1)) & 1 for k in range(1, nu + 1)]  # reg[k-1] = S_k
        z0 = reg[0]
        for u in range(1 << kc):
            z = [z0] + [(u >> i) & 1 for i in range(kc)]
            new = []
            for k in range(1, nu + 1):
                t = 0
                for i, hi in enumerate(h):
                    t ^= ((hi >> k) & 1) & z[i]
                s_next = reg[k] if k < nu else 0
                new.append(t ^ s_next)
            nxt[s, u] = sum(b << (k - 1) for k, b in enumerate(new, start=1))
            out[s, u] = sum(b << i for i, b in enumerate(z))
    return nxt, out


def _tail_inputs(nxt):
    """Coded input per state that moves one step closer to state 0."""
    S = nxt.shape[0]
    dist = np.full(S, -1)
    dist[0] = 0
    tail = np.zeros(S, int)
    frontier = [0]
    while frontier:
        nf = []
        for s in range(S):
            if dist[s] >= 0:
                continue
            for u in range(nxt.shape[1]):
                if nxt[s, u] in frontier:
                    dist[s] = dist[nxt[s, u]] + 1
                    tail[s] = u
                    nf.append(s)
                    break
        frontier = nf
    if np.any(dist < 0):
        raise ValueError("encoder cannot be terminated")
    tail[0] = next(u for u in range(nxt.shape[1]) if nxt[0, u] == 0)
    return tail, int(dist.max())


def _build(name, R, kc, nxt, subset, subsets, const, generator):
    tail, tl = _tail_inputs(nxt)
    return TrellisCode(name, R, kc, nxt.shape[0], nxt, subset, subsets, const, tail, tl, generator)


@lru_cache(maxsize=None)
def get_code(tag):
    """One of the five codes ``rate-1`` .. ``rate-5``."""
    tag = str(tag).lower().strip()
    if tag == "rate-1":
        nxt, out = _feedforward_trellis([0o5, 0o7], 2)
        # Gray QPSK: bit 0 on I, bit 1 on Q
        const = np.array([(1 - 2 * (k & 1)) + 1j * (1 - 2 * ((k >> 1) & 1)) for k in range(4)]) / np.sqrt(2)
        return _build(tag, 1, 1, nxt, out, np.arange(4)[:, None], const, "[5, 7] octal, Gray QPSK")
    if tag == "rate-2":
        nxt, out = _systematic_feedback_trellis([0o5, 0o2], 2)
        const = np.exp(2j * np.pi * np.arange(8) / 8)
        subsets = np.array([[s, s + 4] for s in range(4)])
        return _build(tag, 2, 1, nxt, out, subsets, const, "h0=5 h1=2 octal, 8PSK")
    qam = {"rate-3": "16qam", "rate-4": "32cross", "rate-5": "64qam"}
    if tag in qam:
        nxt, out = _systematic_feedback_trellis([0o11, 0o2, 0o4], 3)
        const, subsets = qam_set_partition(qam[tag])
        R = int(tag[-1])
        return _build(tag, R, 2, nxt, out, subsets, const, f"h0=11 h1=02 h2=04 octal, {qam[tag]}")
    raise ConfigError(f"unknown code {tag!r}")


CODE_TAGS = ("rate-1", "rate-2", "rate-3", "rate-4", "rate-5")


# --- encoding -----------------------------------------------------------------

def bits_to_inputs(code, bits):
    """Group R bits per step (first bit least significant) into integers."""
    bits = np.asarray(bits, np.int64)
    if bits.shape[-1] != code.n_bits:
        raise ValueError(f"expected {code.n_bits} bits, got {bits.shape[-1]}")
    grp = bits.reshape(bits.shape[:-1] + (code.L, code.R))
    return np.sum(grp << np.arange(code.R), axis=-1)


def inputs_to_bits(code, u):
    u = np.asarray(u, np.int64)
    bits = (u[..., None] >> np.arange(code.R)) & 1
    return bits.reshape(u.shape[:-1] + (-1,))


def encode_indices(code, bits):
    """Constellation indices of the codeword(s) for ``bits`` (..., R*L)."""
    u = bits_to_inputs(code, bits)
    batch = u.shape[:-1]
    u = u.reshape(-1, code.L)
    B = u.shape[0]
    kc_mask = (1 << code.k_coded) - 1
    s = np.zeros(B, int)
    idx = np.zeros((B, code.n_symbols), int)
    for t in range(code.L):
        uc = u[:, t] & kc_mask
        ux = u[:, t] >> code.k_coded
        idx[:, t] = code.subsets[code.subset[s, uc], ux]
        s = code.next_state[s, uc]
    for t in range(code.L, code.n_symbols):
        uc = code.tail[s]
        idx[:, t] = code.subsets[code.subset[s, uc], 0]
        s = code.next_state[s, uc]
    return idx.reshape(batch + (code.n_symbols,))


def encode(code, bits):
    """Unit-energy symbols for R*L information bits (tail symbols appended)."""
    return code.constellation[encode_indices(code, bits)]


# --- distance spectrum ----------------------------------------------------------

@dataclass
class DistanceSpectrum:
    """Squared distances with multiplicities per trellis step (= per information symbol)."""
    d2: np.ndarray
    omega: np.ndarray
    L: int = DEFAULT_L

    @property
    def d2_min(self):
        return float(self.d2[0])

    @property
    def d2_max(self):
        return float(self.d2[-1])

    @property
    def omega_min(self):
        return float(self.omega[0])

    @property
    def omega_codeword(self):
        """Multiplicities per codeword, the per-step values times L."""
        return self.omega * self.L

    def union_bound(self, snr):
        """Packet error union bound sum_d L*omega_d*Q(sqrt(snr*d2/2)) (not clipped)."""
        snr = np.asarray(snr, float)[..., None]
        return np.sum(self.L * self.omega * qfunc(np.sqrt(snr * self.d2 / 2)), axis=-1)


def _full_tables(code):
    """Next state and constellation index for every (state, full input)."""
    S, U = code.num_states, 1 << code.R
    kc_mask = (1 << code.k_coded) - 1
    u = np.arange(U)
    uc, ux = u & kc_mask, u >> code.k_coded
    nxt = code.next_state[:, uc]
    idx = code.subsets[code.subset[:, uc], ux[None, :]]
    return nxt, idx


def _grouped_edges(code, nxt, idx, diverge):
    """For each state pair: aggregated (next pair, distance, weight) edges."""
    S, U = nxt.shape
    d2tab = np.abs(code.constellation[:, None] - code.constellation[None, :]) ** 2
    edges = {}
    for s1 in range(S):
        for s2 in range(S):
            if diverge != (s1 == s2):
                continue
            agg = {}
            for u1 in range(U):
                for u2 in range(U):
                    if diverge and u1 == u2:
                        continue
                    key = (nxt[s1, u1] * S + nxt[s2, u2], round(float(d2tab[idx[s1, u1], idx[s2, u2]]), 7))
                    agg[key] = agg.get(key, 0.0) + 1.0 / U
            edges[(s1, s2)] = agg
    return edges


def min_distance(code):
    """Smallest squared Euclidean distance between two codewords (Dijkstra)."""
    nxt, idx = _full_tables(code)
    S, U = nxt.shape
    d2tab = np.abs(code.constellation[:, None] - code.constellation[None, :]) ** 2
    best = {}
    heap = []
    for s in range(S):
        for u1 in range(U):
            for u2 in range(U):
                if u1 != u2:
                    d = d2tab[idx[s, u1], idx[s, u2]]
                    heapq.heappush(heap, (d, nxt[s, u1], nxt[s, u2]))
    while heap:
        d, a, b = heapq.heappop(heap)
        if a == b:
            return float(round(d, 12))
        if best.get((a, b), np.inf) <= d:
            continue
        best[(a, b)] = d
        for u1 in range(U):
            for u2 in range(U):
                heapq.heappush(heap, (d + d2tab[idx[a, u1], idx[b, u2]], nxt[a, u1], nxt[b, u2]))
    raise ValueError("no merging error event")


def distance_spectrum(code, d2_cap=None, max_steps=400, tol=1e-14, max_states=200_000):
    """Error-event distances up to ``d2_cap`` with average multiplicities.

    Walks the pair trellis from every diverging state pair, weighting each
    correct-path input by 1/2**R (uniform data, uniform start state) and
    counting every competing path once, until the paths remerge.
    """
    if d2_cap is None:
        d2_cap = 2.0 * min_distance(code)
    if d2_cap <= 0:
        raise ValueError("d2_cap must be positive")
    nxt, idx = _full_tables(code)
    S = code.num_states
    start = _grouped_edges(code, nxt, idx, diverge=True)
    cont = _grouped_edges(code, nxt, idx, diverge=False)
    found = {}
    live = {}
    for s in range(S):
        for (pair, d), w in start[(s, s)].items():
            if d > d2_cap + 1e-9:
                continue
            a, b = divmod(pair, S)
            if a == b:
                found[d] = found.get(d, 0.0) + w / S
            else:
                live[(pair, d)] = live.get((pair, d), 0.0) + w / S
    for _ in range(max_steps):
        if not live:
            break
        if len(live) > max_states:
            raise ComplexityError("distance spectrum search exploded; lower d2_cap")
        nxt_live = {}
        for (pair, d0), w0 in live.items():
            a, b = divmod(pair, S)
            for (p2, dd), w in cont[(a, b)].items():
                d = round(d0 + dd, 7)
                if d > d2_cap + 1e-9:
                    continue
                a2, b2 = divmod(p2, S)
                if a2 == b2:
                    found[d] = found.get(d, 0.0) + w0 * w
                else:
                    nxt_live[(p2, d)] = nxt_live.get((p2, d), 0.0) + w0 * w
        live = {k: v for k, v in nxt_live.items() if v > tol}
    keys = sorted(found)
    return DistanceSpectrum(np.array(keys), np.array([found[k] for k in keys]), code.L)


# --- channel observations -------------------------------------------------------

@dataclass
class RelayedObservation:
    """Samples y = cascade * x + noise with noise of variance ``noise_var``.

    Arrays may carry a leading batch axis: samples (B, n), cascade (B,), noise_var (B,).
    """
    samples: np.ndarray
    cascade: np.ndarray
    noise_var: np.ndarray

    @property
    def snr(self):
        return np.abs(self.cascade) ** 2 / self.noise_var


def clean(symbols):
    """A transmitter holding the codeword itself (source, or a decoding relay)."""
    x = np.asarray(symbols, complex)
    lead = x.shape[:-1]
    return RelayedObservation(x, np.ones(lead, complex), np.zeros(lead))


def af_relay_forward(obs, gain, phase, rng=None, noise=None):
    """Send ``obs`` over one hop of average-normalized power.

    The transmitter scales its signal to unit expected power, the channel
    multiplies by sqrt(gain)*exp(j*phase) and the receiver adds unit-variance
    complex Gaussian noise (``noise`` overrides the draw).
    """
    if not isinstance(obs, RelayedObservation):
        obs = clean(obs)
    gain = np.asarray(gain, float)
    power = np.abs(obs.cascade) ** 2 + obs.noise_var
    h = np.sqrt(gain / power) * np.exp(1j * np.asarray(phase, float))
    if noise is None:
        shape = obs.samples.shape
        noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    y = h[..., None] * obs.samples + noise
    return RelayedObservation(y, h * obs.cascade, np.abs(h) ** 2 * obs.noise_var + 1.0)


def mrc_combine(observations):
    """SNR-weighted maximal ratio combining of observations of the same codeword."""
    if not observations:
        raise ValueError("nothing to combine")
    z = 0.0
    G = 0.0
    for o in observations:
        wgt = np.conj(o.cascade) / o.noise_var
        z = z + wgt[..., None] * o.samples
        G = G + np.abs(o.cascade) ** 2 / o.noise_var
    G = np.asarray(G, float)
    rt = np.sqrt(G)
    with np.errstate(invalid="ignore", divide="ignore"):
        y = np.where(rt[..., None] > 0, z / np.where(rt > 0, rt, 1.0)[..., None], 0.0)
    return RelayedObservation(y, rt.astype(complex), np.ones_like(G))


# --- Viterbi ------------------------------------------------------------------

@lru_cache(maxsize=None)
def _predecessors(code):
    """Incoming (state, coded input) pairs of every state; tail steps keep only
    the termination input of each state (-1 pads unused slots)."""
    S, Uc = code.next_state.shape
    pred = [[] for _ in range(S)]
    for s in range(S):
        for u in range(Uc):
            pred[code.next_state[s, u]].append((s, u))
    ps = np.array([[p[0] for p in row] for row in pred], np.int64)
    pu = np.array([[p[1] for p in row] for row in pred], np.int64)
    tail_pred = [[] for _ in range(S)]
    for s in range(S):
        tail_pred[code.next_state[s, code.tail[s]]].append(s)
    ts = np.full((S, max(len(r) for r in tail_pred)), -1, np.int64)
    for s2, row in enumerate(tail_pred):
        ts[s2, :len(row)] = row
    return ps, pu, ts


@njit(cache=True)
def _viterbi_kernel(y, g, const, subsets, subset, ps, pu, ts, tail, L, k_coded):
    B, n = y.shape
    S, P = ps.shape
    n_sub, n_par = subsets.shape
    M = const.shape[0]
    out = np.zeros((B, L), np.int64)
    d = np.empty(M)
    msub = np.empty(n_sub)
    ksub = np.empty((n, n_sub), np.int64)
    surv = np.empty((n, S), np.int64)
    pm = np.empty(S)
    new = np.empty(S)
    for bi in range(B):
        for s in range(S):
            pm[s] = np.inf
        pm[0] = 0.0
        gb = g[bi]
        for t in range(n):
            yt = y[bi, t]
            for k in range(M):
                e = yt - gb * const[k]
                d[k] = e.real * e.real + e.imag * e.imag
            for q in range(n_sub):
                best = np.inf
                arg = 0
                for r in range(n_par):
                    v = d[subsets[q, r]]
                    if v < best:
                        best = v
                        arg = r
                msub[q] = best
                ksub[t, q] = arg
            if t < L:
                for s2 in range(S):
                    best = np.inf
                    arg = 0
                    for j in range(P):
                        v = pm[ps[s2, j]] + msub[subset[ps[s2, j], pu[s2, j]]]
                        if v < best:
                            best = v
                            arg = j
                    new[s2] = best
                    surv[t, s2] = arg
            else:
                for s2 in range(S):
                    best = np.inf
                    arg = 0
                    for j in range(ts.shape[1]):
                        s1 = ts[s2, j]
                        if s1 < 0:
                            continue
                        # tail symbols are point 0 of their subset
                        v = pm[s1] + d[subsets[subset[s1, tail[s1]], 0]]
                        if v < best:
                            best = v
                            arg = j
                    new[s2] = best
                    surv[t, s2] = arg
            for s in range(S):
                pm[s] = new[s]
        s = 0
        for t in range(n - 1, -1, -1):
            j = surv[t, s]
            if t < L:
                prev = ps[s, j]
                uc = pu[s, j]
                ux = ksub[t, subset[prev, uc]]
                out[bi, t] = uc | (ux << k_coded)
            else:
                prev = ts[s, j]
            s = prev
    return out


def viterbi_mlsd(obs, code):
    """Maximum-likelihood information bits for each codeword in ``obs``.

    Coherent detection with metric |y - cascade * x|**2; the common noise
    variance does not move the argmin.  Parallel transitions are resolved by the
    nearest point of each subset before the add-compare-select step.
    """
    y = np.ascontiguousarray(np.atleast_2d(obs.samples), complex)
    g = np.ascontiguousarray(np.atleast_1d(obs.cascade), complex)
    if y.shape[1] != code.n_symbols:
        raise ValueError(f"expected {code.n_symbols} samples, got {y.shape[1]}")
    ps, pu, ts = _predecessors(code)
    u_hat = _viterbi_kernel(y, g, code.constellation, np.asarray(code.subsets, np.int64),
                            np.asarray(code.subset, np.int64), ps, pu, ts,
                            np.asarray(code.tail, np.int64), code.L, code.k_coded)
    bits = inputs_to_bits(code, u_hat)
    return bits if np.ndim(obs.samples) > 1 else bits[0]


def hard_demodulate(code, samples):
    """Nearest constellation index per sample (no decoding)."""
    d = np.abs(np.asarray(samples)[..., None] - code.constellation) ** 2
    return np.argmin(d, axis=-1)
