"""Outage after N rounds: closed forms against Monte Carlo for SAF, OAF and SOAF-A.

Run: python demos/outage_curves.py [trials]
"""
import sys

import numpy as np

from coop_arq.outage import SystemParams, db2lin, p_out_oaf, p_out_saf, p_out_soaf_a
from coop_arq.protocols import estimate_outage

T = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
grid = np.arange(0.0, 21.0, 5.0)

print(f"{'rho_dB':>6} {'protocol':>10} {'closed':>11} {'mc':>11} {'ci':>10}")
for db in grid:
    p = SystemParams(rho=float(db2lin(db)))
    rows = [("saf 1.5d", "saf", p.at(m=1), [1.5 * p.delta], p_out_saf(3, 1.5 * p.delta, p.at(m=1))),
            ("oaf", "oaf", p, None, p_out_oaf(3, p)),
            ("soaf-a", "soaf-a", p, [1.5 * p.delta], p_out_soaf_a(3, 1.5 * p.delta, p))]
    for name, kind, q, th, ref in rows:
        est = estimate_outage(kind, q, th, trials=T, seed=int(db))
        print(f"{db:6.1f} {name:>10} {ref:11.4e} {est.prob[3]:11.4e} {est.ci[3]:10.2e}")
