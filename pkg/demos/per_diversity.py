"""SOAF-B packet error rate with searched thresholds and with constant 1.5 delta.

The searched thresholds grow with SNR and keep the PER slope steep; the
constant ones leave a relay-side error floor.  Importance sampling is on.

Run: python demos/per_diversity.py [trials]
"""
import sys

import numpy as np

from coop_arq.experiments import diversity_slope
from coop_arq.outage import SystemParams, db2lin
from coop_arq.packet import estimate_per
from coop_arq.protocols import suggested_bias
from coop_arq.thresholds import DEFAULT_V, CodeMetrics, find_delta_e_star

T = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
met = CodeMetrics.from_code("rate-1")
curves = {"search": [], "const": []}
for db in np.arange(8.0, 16.1, 2.0):
    p = SystemParams(rho=float(db2lin(db)))
    th = {"search": find_delta_e_star(DEFAULT_V, met, p).thresholds,
          "const": np.full(3, 1.5 * p.delta)}
    for k in curves:
        est = estimate_per("soaf-b", "rate-1", p, th[k], trials=T, seed=int(db), bias=suggested_bias(p))
        curves[k].append((db, est.prob[3]))
        print(f"{db:5.1f} dB {k:>7}: PER(n=3) = {est.prob[3]:.3e} +- {est.ci[3]:.1e}")
for k, c in curves.items():
    print(f"{k:>7} slope: {diversity_slope(c):.2f}")
