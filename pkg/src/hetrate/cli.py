"""Command-line front end.

Every command reads a JSON network config (a path or a bundled name such as
``fig2a``) and writes CSV to ``--out`` or stdout. Tiers are numbered from 1
on the command line and in CSV output.

Exit codes: 0 success, 1 invalid config or domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import analytic, montecarlo
from .config import ConfigError, dump_config, load_config
from .model import ValidationError, effective_densities, equivalent_network

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

DEFAULT_SIR_DB = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)

COLUMNS = {
    "ratecov": [
        "rate_bps", "coverage", "per_tier_contribution", "truncation_bound", "coverage_mean_load",
    ],
    "sirccdf": ["tier", "sir_threshold_db", "ccdf"],
    "loadpmf": ["tier", "load", "probability", "cdf", "mean_load", "truncation_mass"],
    "selection": ["tier", "selection_probability", "effective_density", "mean_load"],
    "percentile": ["p", "bias_tier", "bias_db", "percentile_rate_bps"],
    "optbias": ["tier", "p", "bias_db", "percentile_rate", "endpoint_flag"],
    "simulate": [
        "estimator", "mode", "tier", "threshold", "value", "std_error", "realizations_used",
    ],
}


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    if isinstance(x, (list, tuple)):
        return ";".join(fmt(v) for v in x)
    return str(x)


def emit_csv(command: str, rows: Sequence[Sequence], out: Optional[str]) -> None:
    """Write ``rows`` under the fixed header of ``command``."""
    if not rows:
        raise ValueError("no results to write")
    header = COLUMNS[command]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        assert len(r) == len(header), (command, r)
        w.writerow([fmt(v) for v in r])
    _write(buf.getvalue(), out)


def _write(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as e:
        raise OSError(f"cannot write {out}: {e.strerror or e}") from e


def _grid(lo: float, hi: float, points: int, linear: bool) -> np.ndarray:
    if points < 1:
        raise ValueError("--points must be >= 1")
    if points == 1:
        return np.array([lo])
    if linear:
        return np.linspace(lo, hi, points)
    if lo <= 0:
        raise ValueError("log-spaced grid needs a positive lower end; use --linear")
    return np.logspace(np.log10(lo), np.log10(hi), points)


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _tiers(net, tier: Optional[int]) -> List[int]:
    if tier is None:
        return list(range(net.K))
    if not 1 <= tier <= net.K:
        raise IndexError(f"--tier must lie in 1..{net.K}")
    return [tier - 1]


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    load_config(args.config)
    print("ok")
    return EXIT_OK


def cmd_equivalent(args) -> int:
    _write(dump_config(equivalent_network(load_config(args.config))), args.out)
    return EXIT_OK


def cmd_ratecov(args) -> int:
    net = load_config(args.config)
    rates = _grid(args.tmin, args.tmax, args.points, args.linear)
    full = analytic.rate_coverage_curve(net, rates)
    approx = analytic.rate_coverage_mean_load_curve(net, rates) if args.mean_load else [None] * len(rates)
    rows = [
        (r.rate_threshold_bps, r.coverage, r.per_tier_contribution, r.truncation_bound, a)
        for r, a in zip(full, approx)
    ]
    emit_csv("ratecov", rows, args.out)
    return EXIT_OK


def cmd_sirccdf(args) -> int:
    net = load_config(args.config)
    grid = _floats(args.thresholds_db) if args.thresholds_db else _grid(
        args.db_min, args.db_max, args.points, linear=True
    )
    rows = []
    for k in _tiers(net, args.tier):
        for t_db in grid:
            rows.append((k + 1, t_db, analytic.conditional_sir_ccdf(net, k, 10.0 ** (t_db / 10.0))))
    emit_csv("sirccdf", rows, args.out)
    return EXIT_OK


def cmd_loadpmf(args) -> int:
    net = load_config(args.config)
    rows = []
    for k in _tiers(net, args.tier):
        pmf = analytic.load_pmf(net, k, args.n_max)
        for n, p, c in zip(pmf.loads, pmf.probabilities, pmf.cdf()):
            rows.append((k + 1, int(n), p, c, pmf.mean_exact, pmf.truncation_mass))
    emit_csv("loadpmf", rows, args.out)
    return EXIT_OK


def cmd_selection(args) -> int:
    net = load_config(args.config)
    probs = analytic.selection_probabilities(net)
    eff = effective_densities(net)
    rows = [(k + 1, probs[k], eff[k], analytic.mean_load(net, k)) for k in range(net.K)]
    emit_csv("selection", rows, args.out)
    return EXIT_OK


def cmd_percentile(args) -> int:
    net = load_config(args.config)
    if args.bias_tier is None:
        rate = analytic.percentile_rate(net, args.p, mean_load_approx=args.mean_load)
        rows = [(args.p, None, None, rate)]
    else:
        k = _tiers(net, args.bias_tier)[0]
        biases = np.arange(args.bias_min, args.bias_max + 1e-9, args.bias_step)
        rates = analytic.percentile_rate_vs_bias(
            net, k, args.p, biases, mean_load_approx=args.mean_load
        )
        rows = [(args.p, k + 1, b, r) for b, r in zip(biases, rates)]
    emit_csv("percentile", rows, args.out)
    return EXIT_OK


def cmd_optbias(args) -> int:
    net = load_config(args.config)
    k = _tiers(net, args.tier)[0]
    opt = analytic.optimal_bias(
        net, k, args.p, (args.bias_min, args.bias_max), mean_load_approx=args.mean_load
    )
    if opt.at_endpoint:
        logging.getLogger(__name__).warning("optimal bias %.2f dB lies on the search range edge", opt.bias_db)
    emit_csv("optbias", [(k + 1, args.p, opt.bias_db, opt.percentile_rate, opt.at_endpoint)], args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    net = load_config(args.config)
    cfg = montecarlo.SimConfig(
        realizations=args.realizations,
        seed=args.seed,
        window_radius_m=args.window_radius,
        generation_margin_quantile=args.margin_quantile,
        mode=args.mode,
        sir_thresholds_db=_floats(args.sir_db) if args.sir_db else (),
        rate_thresholds_bps=_floats(args.rates) if args.rates else (),
        n_jobs=args.jobs,
    )
    est, mode = args.estimator, args.mode
    rows = []
    if est == "sir" and not cfg.sir_thresholds_db:
        cfg = replace(cfg, sir_thresholds_db=DEFAULT_SIR_DB)
    if est == "rate" and not cfg.rate_thresholds_bps:
        cfg = replace(cfg, rate_thresholds_bps=tuple(_grid(1e4, 1e7, 20, linear=False)))
    if est == "selection":
        for k, e in enumerate(montecarlo.run_selection(net, cfg)):
            rows.append((est, mode, k + 1, None, e.value, e.std_error, e.realizations_used))
    elif est == "sir":
        for k, per_t in enumerate(montecarlo.run_sir(net, cfg)):
            for t_db, e in zip(cfg.sir_thresholds_db, per_t):
                rows.append((est, mode, k + 1, t_db, e.value, e.std_error, e.realizations_used))
    elif est == "load":
        for k, emp in enumerate(montecarlo.run_load(net, cfg)):
            n = emp.realizations_used
            for load in range(1, len(emp.counts)):
                p = emp.counts[load] / n if n else float("nan")
                se = float(np.sqrt(p * (1 - p) / n)) if n else float("nan")
                rows.append((est, mode, k + 1, load, p, se, n))
    else:
        for t, e in zip(cfg.rate_thresholds_bps, montecarlo.run_rate(net, cfg)):
            rows.append((est, mode, None, t, e.value, e.std_error, e.realizations_used))
    emit_csv("simulate", rows, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hetrate", description="Downlink rate distribution of biased, shadowed HetNets."
    )
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="config path or bundled name")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.set_defaults(fn=fn)
        return p

    add("validate", cmd_validate, "check a config")
    add("equivalent", cmd_equivalent, "print the shadowing-free equivalent config")

    p = add("ratecov", cmd_ratecov, "rate coverage over a grid of rate thresholds")
    p.add_argument("--tmin", type=float, default=1e4)
    p.add_argument("--tmax", type=float, default=1e7)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--linear", action="store_true", help="linear instead of log spacing")
    p.add_argument("--mean-load", action="store_true", help="also evaluate the mean-load variant")

    p = add("sirccdf", cmd_sirccdf, "conditional SIR CCDF per serving tier")
    p.add_argument("--tier", type=int, default=None)
    p.add_argument("--thresholds-db", default=None, help="comma-separated SIR thresholds in dB")
    p.add_argument("--db-min", type=float, default=-10.0)
    p.add_argument("--db-max", type=float, default=20.0)
    p.add_argument("--points", type=int, default=31)

    p = add("loadpmf", cmd_loadpmf, "tagged-BS load distribution")
    p.add_argument("--tier", type=int, default=None)
    p.add_argument("--n-max", type=int, default=100)

    add("selection", cmd_selection, "per-tier selection probabilities")

    p = add("percentile", cmd_percentile, "percentile rate, optionally against one tier's bias")
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--mean-load", action="store_true")
    p.add_argument("--bias-tier", type=int, default=None)
    p.add_argument("--bias-min", type=float, default=-10.0)
    p.add_argument("--bias-max", type=float, default=20.0)
    p.add_argument("--bias-step", type=float, default=1.0)

    p = add("optbias", cmd_optbias, "bias of one tier maximising the percentile rate")
    p.add_argument("--tier", type=int, default=2)
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--mean-load", action="store_true")
    p.add_argument("--bias-min", type=float, default=-10.0)
    p.add_argument("--bias-max", type=float, default=20.0)

    p = add("simulate", cmd_simulate, "Monte Carlo estimate")
    p.add_argument("--estimator", choices=["selection", "sir", "load", "rate"], required=True)
    p.add_argument("--mode", choices=list(montecarlo.MODES), default=montecarlo.PHYSICAL)
    p.add_argument("--realizations", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window-radius", type=float, default=None, help="metres")
    p.add_argument("--margin-quantile", type=float, default=0.999)
    p.add_argument("--sir-db", default=None, help="comma-separated SIR thresholds in dB (default -10..20 step 5)")
    p.add_argument(
        "--rates", default=None, help="comma-separated rate thresholds in bit/s (default 20 log-spaced, 1e4..1e7)"
    )
    p.add_argument(
        "--jobs", type=int, default=None, help=f"worker processes (default ${montecarlo.JOBS_ENV} or 1)"
    )
    return ap


def main(argv: Optional[Iterable[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(None if argv is None else list(argv))
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args)
    except ValidationError as e:
        print("invalid config:", file=sys.stderr)
        for v in e.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConfigError, ValueError, IndexError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN


def run(argv: Optional[Iterable[str]] = None) -> None:
    sys.exit(main(argv))


if __name__ == "__main__":
    run()
