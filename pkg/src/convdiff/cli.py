"""Command line entry point ``convdiff``.

Exit codes: 0 success, 2 configuration error, 3 data error, 1 anything else
raised by the library (simulation or optimizer failure).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys

import numpy as np

from . import harness
from .conv_obs import read_series_csv
from .errors import ConfigurationError, ConvDiffError, DataError
from .harness import fmt
from .inference import DEFAULT_SIG_LEVELS, fit, lga_estimate
from .kernel_math import SmoothingBound, kernel_table
from .sde_sim import get_model

EXIT_CONFIG = 2
EXIT_DATA = 3

DEFAULT_TABLE_GRID = (0, 0.15, 0.4, 0.6, 0.85, 1.0, 1.2, 1.5, 1.8, 2.0, 2.3, 2.7, 3.1, 3.6,
                      4.2, 5.5, 7.0, 10.0, 25.0, 60.0)


def _writer(out=None):
    return csv.writer(out or sys.stdout, lineterminator="\n")


def _emit(rows, out=None):
    w = _writer(out)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def _study_parser(sub, name, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--paper-scale", action="store_true",
                   help="1000 replications and m=2 (long running)")
    p.add_argument("overrides", nargs="*", metavar="key=value")
    return p


def _parse_list(text, name):
    if text is None or text.strip().lower() == "none":
        return None
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigurationError(f"{name}: cannot parse {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="convdiff", description=(
        "Simulate and fit diffusions observed through a uniform smoothing kernel."))
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _study_parser(sub, "sim1d", "Monte Carlo study for the 1-d OU model")
    _study_parser(sub, "sim2d", "Monte Carlo study for the 2-d OU model")
    _study_parser(sub, "realdata", "smoothing tests and OU fits for a numeric recording")
    _study_parser(sub, "rv-curve", "realised volatility RV(k) against subsampling step k")

    kt = sub.add_parser("kernel-table", help="closed-form kernel constants next to quadrature")
    kt.add_argument("--grid", help="comma-separated rho values")
    kt.add_argument("--n-grid", type=int, default=20_000)
    kt.add_argument("--rho-bar", type=float, default=100.0)

    es = sub.add_parser("estimate", help="estimate rho, test rho=0 and fit a model to a series")
    es.add_argument("--input", required=True, help="CSV with header t,x1,...,xd")
    es.add_argument("--h", type=float, help="observation step (default: from the t column)")
    es.add_argument("--rho-bar", type=float, default=100.0)
    es.add_argument("--model", default="ou1d", choices=["ou1d", "ou2d"])
    es.add_argument("--known-rho", default="none")
    es.add_argument("--sig-levels", default=",".join(f"{a:g}" for a in DEFAULT_SIG_LEVELS))
    es.add_argument("--lga", action="store_true", help="also fit the local Gaussian baseline")

    sy = sub.add_parser("synth", help="write a synthetic one-column recording")
    sy.add_argument("output")
    sy.add_argument("--alpha", type=float, default=151.919)
    sy.add_argument("--beta", default="-2.146,0.552")
    sy.add_argument("--rho", type=float, default=1.037)
    sy.add_argument("--rate", type=float, default=512.0)
    sy.add_argument("--time-unit", type=float, default=5.0)
    sy.add_argument("--n", type=int, default=113_664)
    sy.add_argument("--m", type=int, default=2)
    sy.add_argument("--seed", type=int, default=1)
    return ap


def cmd_study(args) -> int:
    study = {"rv-curve": "rvcurve"}.get(args.command, args.command)
    cfg = harness.load_config(study, args.config, args.overrides, args.paper_scale)
    if study in ("sim1d", "sim2d"):
        summary = harness.run_sim_study(cfg)
        _emit(summary.rows())
    elif study == "rvcurve":
        res = harness.run_rv_study(cfg)
        _emit([["k", "rv"]] + res.curve)
        print(f"# slope={res.slope:.15g} se={res.slope_se:.15g} z={res.z:.6g}", file=sys.stderr)
    else:
        rep = harness.run_real_data(cfg)
        _emit(rep.table)
        print(f"# h_n={rep.h_n:.15g} n={rep.n} fit_column={rep.fit_column}")
        print(f"# LGA: {rep.lga_equation}")
        print(f"# LSE: {rep.lse_equation}")
    return 0


def cmd_kernel_table(args) -> int:
    grid = DEFAULT_TABLE_GRID if args.grid is None else _parse_list(args.grid, "--grid")
    bound = SmoothingBound(args.rho_bar)
    rows = [["rho_i", "rho_j", "f_G", "branch_G", "f_D0", "branch_D0", "oracle_G", "oracle_D0"]]
    rows += kernel_table(grid, args.n_grid, bound)
    _emit(rows)
    return 0


def cmd_estimate(args) -> int:
    series = read_series_csv(args.input, h_n=args.h)
    model = get_model(args.model)
    bound = SmoothingBound(args.rho_bar)
    levels = _parse_list(args.sig_levels, "--sig-levels")
    known = _parse_list(args.known_rho, "--known-rho")
    res = fit(series, model, bound, known_rho=known, sig_levels=levels)
    est, test = res.rho_estimate, res.test
    kv = {"n": series.n, "h": series.h_n, "model": model.name}
    for i in range(series.dim):
        kv[f"rho_hat_{i + 1}"] = est.rho_hat[i]
        kv[f"t_stat_{i + 1}"] = test.t_stat[i]
        kv[f"p_value_{i + 1}"] = test.p_value[i]
        for a, rej in test.reject_at.items():
            kv[f"reject_{a:g}_{i + 1}"] = bool(rej[i])
    for j, v in enumerate(res.alpha_hat, 1):
        kv[f"alpha_hat_{j}"] = v
    for j, v in enumerate(res.beta_hat, 1):
        kv[f"beta_hat_{j}"] = v
    for k, v in kv.items():
        print(f"{k}={fmt(v)}")
    _emit([["axis", "rho_hat", "t_stat", "p_value"]]
          + [[i + 1, est.rho_hat[i], test.t_stat[i], test.p_value[i]] for i in range(series.dim)])
    if model.name == "ou1d":
        print(f"# LSE: {harness.equation_string(res.alpha_hat[0], res.beta_hat)}")
        if args.lga:
            g = lga_estimate(series, model)
            print(f"# LGA: {harness.equation_string(g.alpha_hat[0], g.beta_hat)}")
    return 0


def cmd_synth(args) -> int:
    beta = _parse_list(args.beta, "--beta")
    if beta is None or len(beta) != 2 or not math.isfinite(args.alpha):
        raise ConfigurationError("--beta needs two values")
    s = harness.write_synthetic_recording(args.output, args.alpha, beta, args.rho, args.rate,
                                          args.time_unit, args.n, args.m, args.seed)
    print(f"wrote {s.n + 1} rows to {args.output} (h_n={s.h_n:.15g})")
    return 0


COMMANDS = {"sim1d": cmd_study, "sim2d": cmd_study, "realdata": cmd_study,
            "rv-curve": cmd_study, "kernel-table": cmd_kernel_table, "estimate": cmd_estimate,
            "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
