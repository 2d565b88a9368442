"""Command line: ``coop-arq run | spectra | thresholds``.

Exit codes: 0 success, 2 configuration error, 3 numerical error.
"""
import argparse
import csv
import sys

import numpy as np

from .errors import ConfigError, NumericalError
from .experiments import SCENARIOS, load_config, run_scenario
from .outage import SystemParams, db2lin
from .fading import Geometry, LinkVariances, variances_from_geometry
from .tcm import CODE_TAGS, distance_spectrum, get_code
from .thresholds import (DEFAULT_EPS0, CodeMetrics, find_delta_e_star, log_scale_thresholds,
                         min_lambda_log_scale)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _float_list(text):
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser():
    ap = argparse.ArgumentParser(prog="coop-arq", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write CSV")
    run.add_argument("scenario", choices=sorted(SCENARIOS))
    run.add_argument("--config", help="INI file; defaults are used for missing keys")
    run.add_argument("--seed", type=_seed, default=None)
    run.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    run.add_argument("--workers", type=int, default=None)

    sp = sub.add_parser("spectra", help="distance spectrum of a trellis code as CSV")
    sp.add_argument("tag", choices=CODE_TAGS)
    sp.add_argument("--lines", type=int, default=10, help="number of spectrum lines")

    th = sub.add_parser("thresholds", help="SOAF-B threshold schedule per SNR")
    th.add_argument("--method", choices=("alg1", "logscale"), default="alg1")
    th.add_argument("--code", choices=CODE_TAGS, default="rate-1")
    th.add_argument("--snr-db", type=_float_list, default=[10, 20, 30, 40, 50, 60])
    th.add_argument("--relays", type=int, default=3)
    th.add_argument("--rounds", type=int, default=3)
    th.add_argument("--v", type=_float_list, default=[1, 2, 3])
    th.add_argument("--eps0", type=float, default=DEFAULT_EPS0)
    th.add_argument("--variances", choices=("unit", "geometry"), default="unit")
    return ap


def _cmd_run(args, out):
    cfg = load_config(args.config, scenario=args.scenario, seed=args.seed, workers=args.workers)
    text = run_scenario(cfg, args.out)
    if args.out is None:
        out.write(text)


def _cmd_spectra(args, out):
    sp = distance_spectrum(get_code(args.tag))
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["d2", "omega_per_step", "omega_codeword"])
    for d2, om in list(zip(sp.d2, sp.omega))[:args.lines]:
        w.writerow([f"{d2:.10g}", f"{om:.10g}", f"{om * sp.L:.10g}"])


def _cmd_thresholds(args, out):
    code = get_code(args.code)
    metrics = CodeMetrics.from_code(code, args.eps0)
    var = LinkVariances() if args.variances == "unit" else variances_from_geometry(Geometry())
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["rho_db", "method", "delta_e", *[f"delta_{k + 1}" for k in range(min(args.relays, args.rounds))]])
    for db in args.snr_db:
        params = SystemParams(R=code.R, m=args.relays, N=args.rounds, variances=var,
                              rho=float(db2lin(db)))
        if args.method == "alg1":
            res = find_delta_e_star(args.v, metrics, params)
            de, th = res.delta_e, res.thresholds
        else:
            th = log_scale_thresholds(params.rho, params.m, params.N, args.v, metrics)
            de = min_lambda_log_scale(params.m, params.N, args.v, metrics) * np.log(params.rho)
        w.writerow([f"{db:g}", args.method, f"{de:.10g}", *[f"{x:.10g}" for x in th]])


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        {"run": _cmd_run, "spectra": _cmd_spectra, "thresholds": _cmd_thresholds}[args.command](args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
