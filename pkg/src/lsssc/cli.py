"""Command-line entry point: ``lsssc {trial,sweep,geometry,certify}``.

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 an ``--assert``
threshold was not met.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from .certificates import (check_nontrivial, check_subspace_detection,
                           construct_dual_certificate, deterministic_criterion,
                           lambda_in_interval, missing_data_criteria, random_model_criteria)
from .core import GeometrySummary
from .experiments import ConfigError, ExperimentConfig, expand_cells, run_sweep, run_trial, trial_seed
from .generator import generate
from .geometry import compute_incoherence, compute_r
from .solver import solve_lsssc

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_THRESHOLD = 0, 1, 2, 3


def _lambda_arg(text):
    if text == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("lambda must be positive")
    return v


def _seed_arg(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (defaults built in)")
    common.add_argument("--seed", type=_seed_arg, help="override the config seed")
    common.add_argument("--lambda", dest="lam", type=_lambda_arg,
                        help="a positive number or 'auto' for 2 sqrt(n / (6 log N))")
    common.add_argument("--measure-geometry", action="store_true",
                        help="measure r and mu (slow)")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lsssc", description="Robust sparse subspace clustering.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("trial", parents=[common], help="run one trial and print it as JSON")
    t.add_argument("--cell", type=int, default=0, help="index of the cell in grid order")
    t.add_argument("--trial", type=int, default=0)
    t.add_argument("--assert-success", action="store_true")

    s = sub.add_parser("sweep", parents=[common], help="run the full grid")
    s.add_argument("--timing", action="store_true", help="record wall_ms (breaks byte-identity)")
    s.add_argument("--assert-success-rate", type=float, metavar="P",
                   help="fail unless every cell succeeds at rate >= P")

    g = sub.add_parser("geometry", parents=[common], help="r, mu, delta and the lambda window")
    g.add_argument("--cell", type=int, default=0)
    g.add_argument("--trial", type=int, default=0)
    g.add_argument("--assert-criterion", action="store_true")

    c = sub.add_parser("certify", parents=[common], help="solve and verify certificates")
    c.add_argument("--cell", type=int, default=0)
    c.add_argument("--trial", type=int, default=0)
    c.add_argument("--assert-detection", action="store_true")
    return p


def _config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.lam is not None:
        cfg = replace(cfg, lam=args.lam, lams=())
    if args.measure_geometry:
        cfg = replace(cfg, measure_geometry=True)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    if args.out is not None:
        cfg = replace(cfg, output=args.out)
    return cfg


def _pick(cfg, args):
    cells = expand_cells(cfg)
    if not 0 <= args.cell < len(cells):
        raise ConfigError(f"--cell must lie in [0, {len(cells)}), got {args.cell}")
    cell = cells[args.cell]
    return cell, trial_seed(cfg.seed, cell, args.trial)


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True, default=_json_default)
    sys.stdout.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def cmd_trial(cfg, args):
    cell, seed = _pick(cfg, args)
    res = run_trial(cell, seed, cfg.measure_geometry, rule=cfg.rule)
    res = replace(res, trial=args.trial)
    out = {"cell_id": cell.cell_id, "trial": res.trial, "seed": res.seed, "lambda": res.lam,
           "detection": res.detection, "false_positives": res.false_positives,
           "nontrivial": res.nontrivial, "L_hat": res.L_hat,
           "clustering_error": res.clustering_error, "r": res.r, "mu": res.mu,
           "delta": res.delta, "verdicts": res.verdicts, "error": res.error,
           "success": res.succeeded(cfg.success)}
    _emit(out)
    if args.assert_success and not out["success"]:
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_sweep(cfg, args):
    cfg = replace(cfg, timing=cfg.timing or args.timing)
    rep = run_sweep(cfg, cfg.output, cfg.threads)
    for c in rep.summary["cells"]:
        print(f"{c['cell_id']}: success {c['success_rate']:.3f} over {c['trials']} trials, "
              f"mean error {c['mean_error']:.4f}")
    for m in rep.summary["m_star"]:
        print(f"m*(n={m['n']}, d={m['d']}) = {m['m_star']}")
    if args.assert_success_rate is not None:
        worst = min(c["success_rate"] for c in rep.summary["cells"])
        if worst < args.assert_success_rate:
            print(f"lowest success rate {worst:.3f} < {args.assert_success_rate}",
                  file=sys.stderr)
            return EXIT_THRESHOLD
    return EXIT_OK


def cmd_geometry(cfg, args):
    cell, seed = _pick(cfg, args)
    ds = generate(cell.generator_config(seed))
    lam = cell.lambda_value()
    prof = compute_r(ds.Y, ds.truth, seed=seed % 2 ** 32)
    inc = compute_incoherence(ds.X, ds.Y, ds.truth, lam)
    rep = deterministic_criterion(prof.r, inc.mu, ds.delta)
    lo, hi = rep.interval if rep.interval else (float("nan"), float("nan"))
    flags = list(inc.flags)
    if prof.degenerate:
        flags.append(f"{len(prof.degenerate)} leave-one-out hull(s) do not span their subspace")
    summ = GeometrySummary(prof.r_ell, prof.r, inc.mu_ell, inc.mu, ds.delta, lo, hi,
                           rep.verdict, tuple(flags))
    out = summ.to_dict()
    out.update(cell_id=cell.cell_id, seed=seed, **{"lambda": lam},
               lambda_in_interval=bool(rep.interval and lambda_in_interval(lam, rep.interval)),
               margin=rep.margin)
    _emit(out)
    if args.assert_criterion and not rep.verdict:
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_certify(cfg, args):
    cell, seed = _pick(cfg, args)
    ds = generate(cell.generator_config(seed))
    lam = cell.lambda_value()
    labels = ds.truth.labels
    sol = solve_lsssc(ds.X, lam)
    det, fps = check_subspace_detection(sol.C, labels)
    nt, zero = check_nontrivial(sol.C)
    passed = 0
    for i in range(ds.X.N):
        if construct_dual_certificate(ds.X, labels, i, lam).check().holds:
            passed += 1
    dims, kappas = [cell.d] * cell.L, [cell.kappa] * cell.L
    reports = {}
    if cell.kappa > 1:
        reports["random_model"] = random_model_criteria(cell.n, cell.N, dims, kappas,
                                                        ds.delta).to_dict()
        reports["missing_data"] = missing_data_criteria(
            cell.n, cell.N, dims, kappas, missing=[cell.m] * cell.L).to_dict()
    _emit({"cell_id": cell.cell_id, "seed": seed, "lambda": lam, "delta": ds.delta,
           "detection": det, "false_positives": [list(f) for f in fps],
           "nontrivial": nt, "zero_columns": zero,
           "certificates_passed": passed, "columns": int(ds.X.N), "criteria": reports})
    if args.assert_detection and not det:
        return EXIT_THRESHOLD
    return EXIT_OK


COMMANDS = {"trial": cmd_trial, "sweep": cmd_sweep, "geometry": cmd_geometry,
            "certify": cmd_certify}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; that is a config error here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
