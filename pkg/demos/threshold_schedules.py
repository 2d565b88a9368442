"""Per-hop SOAF-B thresholds from the search and from the log-scale rule.

Run: python demos/threshold_schedules.py
"""
import numpy as np

from coop_arq.outage import SystemParams, db2lin
from coop_arq.thresholds import (DEFAULT_V, CodeMetrics, find_delta_e_star, log_scale_thresholds,
                                 min_lambda_log_scale)

met = CodeMetrics.from_code("rate-1")
lam = min_lambda_log_scale(3, 3, DEFAULT_V, met)
print(f"minimum log-scale factor lambda_e = {lam:.4f}")
print(f"{'rho_dB':>6} {'search Delta_e':>15} {'lambda_e ln rho':>16} {'ratio':>7}")
for db in np.arange(10.0, 61.0, 10.0):
    p = SystemParams(rho=float(db2lin(db)))
    de = find_delta_e_star(DEFAULT_V, met, p).delta_e
    ls = log_scale_thresholds(p.rho, 3, 3, DEFAULT_V, met)[0]
    print(f"{db:6.0f} {de:15.4f} {ls:16.4f} {de / ls:7.3f}")
