"""Link statistics and block Rayleigh fading draws.

All gains are composite SNRs ``rho * |h|**2`` and are exponentially
distributed with mean ``rho * beta`` for their link class.
"""
from dataclasses import dataclass

import numpy as np

# Link classes used to name independent random substreams.
LINK_CLASSES = {
    "sd": 0,
    "sr": 1,
    "rd": 2,
    "rr": 3,
    "phase": 4,
    "noise_d": 5,
    "noise_r": 6,
    "bits": 7,
    "placement": 8,
    "mix": 9,
}


@dataclass(frozen=True)
class Geometry:
    """Relays spread uniformly in a disk of radius s0 centred at (s1, s2).

    The source sits at (0, 0) and the destination at (1, 0).
    """
    s0: float = 0.05
    s1: float = 0.5
    s2: float = 0.0
    eta: float = 3.0

    def __post_init__(self):
        if self.s0 < 0:
            raise ValueError("s0 must be nonnegative")
        if self.eta <= 0:
            raise ValueError("eta must be positive")


@dataclass(frozen=True)
class LinkVariances:
    """Per-class channel power: S-D, worst S-R, worst R-D, worst R-R."""
    beta0: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 1.0

    def __post_init__(self):
        for name in ("beta0", "beta1", "beta2", "beta3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class PairwiseVariances:
    """Exact per-relay variances for one placement of m relays.

    beta1[j]: S-R_j, beta2[j]: R_j-D, beta3[i, j]: R_i-R_j (diagonal unused).
    """
    beta0: float
    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray

    @property
    def m(self):
        return len(self.beta1)


@dataclass(frozen=True)
class ChannelRealization:
    """Gains for one round: w (S-D), a[j] (S-R), b[j] (R-D), c[i, j] (R-R)."""
    w: float
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


def substream(seed, chunk, link_class):
    """Generator for one (chunk of trials, link class) pair.

    Trials are grouped in fixed-size chunks; every chunk owns one stream per
    link class, so results do not depend on how chunks are spread over workers.
    """
    key = LINK_CLASSES[link_class] if isinstance(link_class, str) else int(link_class)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(chunk), key))
    return np.random.Generator(np.random.PCG64(ss))


def variances_from_geometry(geom):
    """Worst-case link variances for relays anywhere in the disk."""
    d_sr = np.hypot(geom.s1, geom.s2) + geom.s0
    d_rd = np.hypot(1.0 - geom.s1, geom.s2) + geom.s0
    d_rr = 2.0 * geom.s0
    if d_sr <= 0 or d_rd <= 0 or d_rr <= 0:
        raise ValueError("degenerate geometry: zero link distance")
    return LinkVariances(1.0, d_sr ** -geom.eta, d_rd ** -geom.eta, d_rr ** -geom.eta)


def place_relays(geom, m, rng):
    """Draw m points uniformly in the relay disk; returns an (m, 2) array."""
    if m < 1:
        raise ValueError("need at least one relay")
    r = geom.s0 * np.sqrt(rng.random(m))
    th = 2 * np.pi * rng.random(m)
    return np.column_stack([geom.s1 + r * np.cos(th), geom.s2 + r * np.sin(th)])


def pairwise_variances(positions, eta=3.0):
    """Per-relay variances from relay positions (source (0,0), destination (1,0))."""
    pos = np.asarray(positions, float)
    d_sr = np.hypot(pos[:, 0], pos[:, 1])
    d_rd = np.hypot(1.0 - pos[:, 0], pos[:, 1])
    diff = pos[:, None, :] - pos[None, :, :]
    d_rr = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(d_rr, 1.0)
    return PairwiseVariances(1.0, d_sr ** -eta, d_rd ** -eta, d_rr ** -eta)


def draw_round(v, rho, rng, m=1):
    """One round of independent exponential gains for m relays."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    beta1 = np.broadcast_to(np.asarray(getattr(v, "beta1")), (m,))
    beta2 = np.broadcast_to(np.asarray(getattr(v, "beta2")), (m,))
    beta3 = np.broadcast_to(np.asarray(getattr(v, "beta3")), (m, m))
    w = rho * v.beta0 * rng.standard_exponential()
    a = rho * beta1 * rng.standard_exponential(m)
    b = rho * beta2 * rng.standard_exponential(m)
    c = rho * beta3 * rng.standard_exponential((m, m))
    c = c.copy()
    np.fill_diagonal(c, np.nan)
    return ChannelRealization(float(w), a, b, c)


def af_two_hop_snr(a, b):
    """Destination SNR of a two-hop AF link, ab / (a + b + 1)."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return a * b / (a + b + 1.0)


def af_multi_hop_snr(chain, b):
    """Destination SNR after the hops in ``chain`` plus the final hop ``b``.

    ``chain`` holds the first-hop S-R gain followed by the R-R gains. A dead hop
    (zero gain) gives SNR 0.
    """
    if len(chain) == 1:
        return af_two_hop_snr(chain[0], b)[()]
    gains = [np.asarray(g, float) for g in chain] + [np.asarray(b, float)]
    with np.errstate(divide="ignore", invalid="ignore"):
        # expm1/log1p keep precision when every hop is strong
        s = sum(np.log1p(1.0 / g) for g in gains)
        out = 1.0 / np.expm1(s)
    dead = np.zeros(np.broadcast(*gains).shape, bool)
    for g in gains:
        dead = dead | (g <= 0)
    out = np.where(dead, 0.0, out)
    return out[()] if out.ndim == 0 else out
