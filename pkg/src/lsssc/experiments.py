"""Monte-Carlo harness: trials, parameter sweeps and the m* bisection.

A sweep expands the config's axes into cells, runs ``trials`` independent
trials per cell and appends one CSV row per trial.  Rows are the single
source of truth: the summary is recomputed from them, and a rerun with the
same config skips every ``(cell_id, trial)`` already on disk.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import metadata

import numpy as np

from .certificates import (check_nontrivial, check_subspace_detection, default_lambda,
                           deterministic_criterion, lambda_in_interval,
                           missing_data_criteria, random_model_criteria)
from .clustering import (DegenerateGraphError, build_affinity, clustering_error,
                         estimate_num_clusters, spectral_cluster)
from .core import ConvergenceError, InvalidParameterError
from .generator import GeneratorConfig, NoiseSpec, generate
from .geometry import compute_incoherence, compute_r
from .solver import DEFAULT_OPTIONS, solve_lsssc

log = logging.getLogger(__name__)

HEADER = ("cell_id", "trial", "seed", "n", "N", "L", "d", "kappa", "delta", "m", "lambda",
          "detection", "false_positives", "nontrivial", "L_hat", "clustering_error",
          "r", "mu", "wall_ms")
HEADER_VERSION = 1
NOISE_KINDS = ("auto", "none", "ball", "adversarial", "missing")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - source checkout
        return "unknown"


# -- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class Success:
    detection: bool = True
    nontrivial: bool = True
    clustering: bool = True
    max_error: float = 0.0


@dataclass(frozen=True)
class Bisection:
    enabled: bool = False
    target: float = 0.9
    trials: int = 20
    lo: int = 0
    hi: int | None = None  # defaults to n - 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep definition.

    ``lam`` is ``"auto"`` (``2 sqrt(n / (6 log N))`` per cell) or a number.
    Each axis lists values for one cell parameter; an empty axis falls back
    to the base value (``lam`` for the lambda axis).
    """

    n: int = 30
    L: int = 2
    d: int = 2
    kappa: float = 5.0
    noise: str = "auto"
    lam: float | str = "auto"
    deltas: tuple = (0.0,)
    ms: tuple = (0,)
    ds: tuple = ()
    lams: tuple = ()
    ns: tuple = ()
    trials: int = 10
    success: Success = field(default_factory=Success)
    seed: int = 0
    output: str | None = None
    measure_geometry: bool = False
    timing: bool = False
    threads: int = 1
    rule: str = "relative"
    bisection: Bisection = field(default_factory=Bisection)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"noise must be one of {NOISE_KINDS}, got {self.noise!r}")
        if self.lam != "auto" and not (isinstance(self.lam, (int, float)) and self.lam > 0):
            raise ConfigError(f"lambda must be 'auto' or a positive number, got {self.lam!r}")
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")
        if not 0 < self.bisection.target <= 1 or self.bisection.trials < 1:
            raise ConfigError("bisection needs 0 < target <= 1 and trials >= 1")
        for name in ("deltas", "ms", "ds", "lams", "ns"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.deltas or not self.ms:
            raise ConfigError("delta and m axes must be non-empty")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        gen = dict(d.pop("generator", {}))
        sweep = dict(d.pop("sweep", {}))
        kw = {}
        for key in ("n", "L", "d", "kappa", "noise"):
            if key in gen:
                kw[key] = gen.pop(key)
        if gen:
            raise ConfigError(f"unknown generator keys: {sorted(gen)}")
        axes = {"delta": "deltas", "m": "ms", "d": "ds", "lambda": "lams", "n": "ns"}
        for key, name in axes.items():
            if key in sweep:
                kw[name] = tuple(sweep.pop(key))
        if sweep:
            raise ConfigError(f"unknown sweep axes: {sorted(sweep)}")
        if "lambda" in d:
            kw["lam"] = d.pop("lambda")
        if "success" in d:
            kw["success"] = Success(**d.pop("success"))
        if "bisect_m" in d:
            kw["bisection"] = Bisection(**d.pop("bisect_m"))
        for key in ("trials", "seed", "output", "measure_geometry", "timing", "threads", "rule"):
            if key in d:
                kw[key] = d.pop(key)
        if d:
            raise ConfigError(f"unknown config keys: {sorted(d)}")
        try:
            return cls(**kw)
        except TypeError as err:
            raise ConfigError(str(err)) from None

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self):
        return {
            "generator": {"n": self.n, "L": self.L, "d": self.d, "kappa": self.kappa,
                          "noise": self.noise},
            "lambda": self.lam,
            "sweep": {"delta": list(self.deltas), "m": list(self.ms), "d": list(self.ds),
                      "lambda": list(self.lams), "n": list(self.ns)},
            "trials": self.trials, "success": asdict(self.success), "seed": self.seed,
            "output": self.output, "measure_geometry": self.measure_geometry,
            "timing": self.timing, "threads": self.threads, "rule": self.rule,
            "bisect_m": asdict(self.bisection),
        }

    def digest(self):
        """Hash of everything that affects row contents (not threads or output)."""
        d = self.to_dict()
        for key in ("threads", "output"):
            d.pop(key)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- cells and trials ----------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    n: int
    L: int
    d: int
    kappa: float
    delta: float = 0.0
    m: int = 0
    lam: float | None = None  # None: default policy
    noise: str = "auto"

    @property
    def cell_id(self):
        lam = "auto" if self.lam is None else repr(float(self.lam))
        return (f"n{self.n}-L{self.L}-d{self.d}-k{float(self.kappa)!r}"
                f"-delta{float(self.delta)!r}-m{self.m}-lam{lam}-{self.noise}")

    @property
    def counts(self):
        return [int(round(self.kappa * self.d))] * self.L

    @property
    def N(self):
        return sum(self.counts)

    def lambda_value(self):
        return default_lambda(self.n, self.N) if self.lam is None else float(self.lam)

    def noise_spec(self):
        kind = self.noise
        if kind == "auto":
            if self.m and self.delta:
                raise ConfigError("a cell cannot have both delta > 0 and m > 0")
            kind = "missing" if self.m else ("ball" if self.delta else "none")
        if kind == "missing":
            return NoiseSpec("missing", missing=(self.m,) * self.L)
        if kind in ("ball", "adversarial"):
            return NoiseSpec(kind, delta=self.delta)
        return NoiseSpec("none")

    def generator_config(self, seed):
        try:
            return GeneratorConfig(self.n, (self.d,) * self.L, (self.kappa,) * self.L,
                                   self.noise_spec(), seed)
        except (InvalidParameterError, ValueError) as err:
            raise ConfigError(f"cell {self.cell_id}: {err}") from None


def trial_seed(seed, cell: Cell, trial):
    """Per-trial seed shared by every cell that differs only in delta, m or lambda.

    Sharing the draw across those axes gives common random numbers: a sweep
    over m sees the same subspaces, points and (nested) masks.
    """
    key = (int(cell.n), int(cell.L), int(cell.d), int(round(cell.kappa * 1_000_000)), int(trial))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class TrialResult:
    cell: Cell
    trial: int
    seed: int
    lam: float
    detection: bool
    false_positives: int
    nontrivial: bool
    L_hat: int | None
    clustering_error: float
    r: float | None = None
    mu: float | None = None
    delta: float | None = None  # measured max_i |z_i|
    verdicts: dict = field(default_factory=dict)
    wall_ms: float | None = None
    error: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.clustering_error <= 1.0:
            raise ValueError(f"clustering error {self.clustering_error} outside [0, 1]")

    @property
    def N(self):
        return self.cell.N

    def succeeded(self, success: Success = Success()):
        return _success(self.detection, self.nontrivial, self.clustering_error, success)

    def to_row(self):
        c = self.cell
        return [c.cell_id, str(self.trial), str(self.seed), str(c.n), str(c.N), str(c.L),
                str(c.d), _fmt(float(c.kappa)), _fmt(float(c.delta)), str(c.m),
                _fmt(self.lam), _fmt(self.detection), str(self.false_positives),
                _fmt(self.nontrivial), _fmt(self.L_hat), _fmt(self.clustering_error),
                _fmt(self.r), _fmt(self.mu), _fmt(self.wall_ms)]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _success(detection, nontrivial, error, s: Success):
    ok = True
    if s.detection:
        ok = ok and detection
    if s.nontrivial:
        ok = ok and nontrivial
    if s.clustering:
        ok = ok and error <= s.max_error
    return bool(ok)


def run_trial(cell: Cell, seed, measure_geometry=False, opts=DEFAULT_OPTIONS,
              rule="relative", timing=False, cluster_seed=0) -> TrialResult:
    """One generate -> solve -> verify -> cluster pass.

    Deterministic given ``(cell, seed)``.  Solver failures come back as a
    result with ``error`` set and every success flag false.
    """
    t0 = time.perf_counter()
    gcfg = cell.generator_config(seed)
    ds = generate(gcfg)
    lam = cell.lambda_value()
    labels = ds.truth.labels
    base = dict(cell=cell, trial=0, seed=int(seed), lam=lam, delta=ds.delta)

    def elapsed():
        return (time.perf_counter() - t0) * 1e3 if timing else None

    try:
        sol = solve_lsssc(ds.X, lam, opts)
    except ConvergenceError as err:
        log.warning("cell %s seed %d: %s", cell.cell_id, seed, err)
        return TrialResult(detection=False, false_positives=0, nontrivial=False, L_hat=None,
                           clustering_error=1.0, wall_ms=elapsed(), error=str(err), **base)
    C = sol.C
    detection, fps = check_subspace_detection(C, labels)
    nontrivial, _ = check_nontrivial(C)

    G = build_affinity(C)
    try:
        L_hat = estimate_num_clusters(G, rule)
        pred = spectral_cluster(G, L_hat, cluster_seed)
    except DegenerateGraphError:
        L_hat = None
        pred = np.ones(C.shape[0], dtype=np.int64)
    err = clustering_error(pred, labels, force_wrong=G.isolated)

    verdicts = {}
    if cell.L >= 1 and cell.kappa > 1:
        rm = random_model_criteria(cell.n, cell.N, [cell.d] * cell.L, [cell.kappa] * cell.L,
                                   ds.delta)
        verdicts["random_model"] = rm.verdict
        verdicts["lambda_in_random_interval"] = lambda_in_interval(lam, rm.interval)
        if cell.m:
            md = missing_data_criteria(cell.n, cell.N, [cell.d] * cell.L,
                                       [cell.kappa] * cell.L, missing=[cell.m] * cell.L)
            verdicts["missing_data"] = md.verdict
    r = mu = None
    if measure_geometry:
        r = compute_r(ds.Y, ds.truth, seed=int(seed) % 2 ** 32).r
        mu = compute_incoherence(ds.X, ds.Y, ds.truth, lam, opts).mu
        det = deterministic_criterion(r, mu, ds.delta)
        verdicts["deterministic"] = det.verdict
        verdicts["lambda_in_deterministic_interval"] = (
            det.hypotheses_hold and lambda_in_interval(lam, det.interval))
    return TrialResult(detection=detection, false_positives=len(fps), nontrivial=nontrivial,
                       L_hat=L_hat, clustering_error=err, r=r, mu=mu, verdicts=verdicts,
                       wall_ms=elapsed(), **base)


# -- sweeps --------------------------------------------------------------------

def expand_cells(cfg: ExperimentConfig):
    """Cells in grid order: n, d, delta, m, lambda (last varies fastest)."""
    ns = cfg.ns or (cfg.n,)
    ds = cfg.ds or (cfg.d,)
    if cfg.lams:
        lams = tuple(float(v) for v in cfg.lams)
    else:
        lams = (None if cfg.lam == "auto" else float(cfg.lam),)
    cells = []
    for n, d, delta, m, lam in itertools.product(ns, ds, cfg.deltas, cfg.ms, lams):
        cell = Cell(int(n), cfg.L, int(d), float(cfg.kappa), float(delta), int(m), lam,
                    cfg.noise)
        cell.generator_config(0)  # validates
        cells.append(cell)
    return cells


@dataclass
class SweepReport:
    rows: list
    summary: dict
    out_dir: str | None


def _parse_row(rec):
    def num(key, typ=float):
        v = rec[key]
        return None if v == "" else typ(v)

    return {"cell_id": rec["cell_id"], "trial": int(rec["trial"]), "seed": int(rec["seed"]),
            "n": int(rec["n"]), "N": int(rec["N"]), "L": int(rec["L"]), "d": int(rec["d"]),
            "kappa": float(rec["kappa"]), "delta": float(rec["delta"]), "m": int(rec["m"]),
            "lambda": float(rec["lambda"]), "detection": rec["detection"] == "true",
            "false_positives": int(rec["false_positives"]),
            "nontrivial": rec["nontrivial"] == "true", "L_hat": num("L_hat", int),
            "clustering_error": float(rec["clustering_error"]), "r": num("r"),
            "mu": num("mu"), "wall_ms": num("wall_ms")}


def read_results(path):
    """Parse a results file; a partial last line is ignored."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if text and not text.endswith("\n"):
        text = text[:text.rfind("\n") + 1]
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is not None and tuple(reader.fieldnames) != HEADER:
        raise ConfigError(f"{path} has an unexpected header: {reader.fieldnames}")
    return [_parse_row(rec) for rec in reader]


class _Writer:
    """Append-only CSV writer that repairs a partial last line on open."""

    def __init__(self, path):
        self.path = path
        fresh = not os.path.exists(path) or os.path.getsize(path) == 0
        if not fresh:
            with open(path, "rb+") as fh:
                data = fh.read()
                if not data.endswith(b"\n"):
                    fh.truncate(data.rfind(b"\n") + 1)
        self.fh = open(path, "a", encoding="utf-8", newline="")
        self.csv = csv.writer(self.fh, lineterminator="\n")
        if fresh or os.path.getsize(path) == 0:
            self.csv.writerow(HEADER)
            self.fh.flush()

    def write(self, row):
        self.csv.writerow(row)
        self.fh.flush()

    def close(self):
        self.fh.close()


def _check_writable(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write-test")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as err:
        raise OSError(f"output directory {out_dir!r} is not writable: {err}") from err


class _Runner:
    """Runs jobs that are not on disk yet and indexes every row by (cell_id, trial)."""

    def __init__(self, cfg: ExperimentConfig, writer, existing, threads, opts):
        self.cfg = cfg
        self.writer = writer
        self.rows = {(r["cell_id"], r["trial"]): r for r in existing}
        self.threads = threads
        self.opts = opts
        self.new = []

    def run(self, jobs):
        todo = [(c, t) for c, t in jobs if (c.cell_id, t) not in self.rows]
        if not todo:
            return

        def work(job):
            cell, t = job
            res = run_trial(cell, trial_seed(self.cfg.seed, cell, t),
                            self.cfg.measure_geometry, self.opts, self.cfg.rule,
                            self.cfg.timing)
            return replace(res, trial=t)

        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                self._consume(pool.map(work, todo))
        else:
            self._consume(map(work, todo))

    def _consume(self, results):
        # map() yields in submission order, so file order never depends on timing
        for res in results:
            row = _blank_timing(res.to_row(), self.cfg.timing)
            if self.writer is not None:
                self.writer.write(row)
            self.rows[(res.cell.cell_id, res.trial)] = _parse_row(dict(zip(HEADER, row)))
            self.new.append(res)

    def success_rate(self, cell, trials):
        return _success_rate([self.rows[(cell.cell_id, t)] for t in range(trials)], self.cfg)


def summarize(rows, cfg: ExperimentConfig, m_star=None):
    """Per-cell aggregates recomputed from raw rows."""
    cells = {}
    for row in rows:
        cells.setdefault(row["cell_id"], []).append(row)
    def order(cid):
        r = cells[cid][0]
        return (r["n"], r["L"], r["d"], r["kappa"], r["delta"], r["m"], r["lambda"], cid)

    out = []
    for cid in sorted(cells, key=order):
        rs = sorted(cells[cid], key=lambda r: r["trial"])
        first = rs[0]
        succ = [_success(r["detection"], r["nontrivial"], r["clustering_error"], cfg.success)
                for r in rs]
        lhat = [r["L_hat"] for r in rs if r["L_hat"] is not None]
        out.append({
            "cell_id": cid, "n": first["n"], "N": first["N"], "L": first["L"],
            "d": first["d"], "kappa": first["kappa"], "delta": first["delta"],
            "m": first["m"], "lambda": first["lambda"], "trials": len(rs),
            "success_rate": float(np.mean(succ)),
            "detection_rate": float(np.mean([r["detection"] for r in rs])),
            "nontrivial_rate": float(np.mean([r["nontrivial"] for r in rs])),
            "mean_error": float(np.mean([r["clustering_error"] for r in rs])),
            "mean_L_hat": float(np.mean(lhat)) if lhat else None,
        })
    return {"library_version": _version(), "header_version": HEADER_VERSION,
            "seed": cfg.seed, "config": cfg.to_dict(), "cells": out,
            "m_star": m_star or []}


def _success_rate(rows, cfg):
    return float(np.mean([_success(r["detection"], r["nontrivial"], r["clustering_error"],
                                   cfg.success) for r in rows]))


def bisect_m(probe, lo, hi, target):
    """Largest ``m`` in ``[lo, hi]`` with ``probe(m) >= target``.

    Assumes the success frequency is nonincreasing in ``m``; returns
    ``(m_star, probes)`` where ``m_star`` is None if even ``lo`` fails.
    """
    probes = {}

    def f(m):
        if m not in probes:
            probes[m] = probe(m)
        return probes[m]

    if f(lo) < target:
        return None, probes
    if f(hi) >= target:
        return hi, probes
    good, bad = lo, hi
    while bad - good > 1:
        mid = (good + bad) // 2
        if f(mid) >= target:
            good = mid
        else:
            bad = mid
    return good, probes


def monotonicity_violations(freqs):
    """Pairs ``m1 < m2`` with ``freq(m1) < freq(m2)``, as ``(m1, f1, m2, f2)``."""
    items = sorted(freqs.items())
    out = []
    for i, (m1, f1) in enumerate(items):
        for m2, f2 in items[i + 1:]:
            if f2 > f1:
                out.append((m1, f1, m2, f2))
    return out


def run_sweep(cfg: ExperimentConfig, out_dir=None, threads=None, opts=DEFAULT_OPTIONS):
    """Run every cell of ``cfg`` (and the m* bisection when enabled).

    With an output directory, rows go to ``results.csv`` as they finish and
    ``summary.json`` is written at the end.  Rerunning into the same
    directory resumes: rows already present are not recomputed.
    """
    out_dir = out_dir if out_dir is not None else cfg.output
    threads = threads or cfg.threads
    cells = expand_cells(cfg)
    writer = None
    existing = []
    if out_dir is not None:
        _check_writable(out_dir)
        manifest = os.path.join(out_dir, "manifest.json")
        results = os.path.join(out_dir, "results.csv")
        if os.path.exists(manifest):
            with open(manifest, encoding="utf-8") as fh:
                old = json.load(fh)
            if old.get("config_digest") != cfg.digest():
                raise ConfigError(f"{out_dir} holds results for a different config; "
                                  "use a fresh output directory")
        with open(manifest, "w", encoding="utf-8") as fh:
            json.dump({"config_digest": cfg.digest(), "header_version": HEADER_VERSION},
                      fh, sort_keys=True, indent=2)
            fh.write("\n")
        if os.path.exists(results):
            existing = read_results(results)
        writer = _Writer(results)
    runner = _Runner(cfg, writer, existing, threads, opts)
    try:
        runner.run([(c, t) for c in cells for t in range(cfg.trials)])
        m_star = _run_bisection(cfg, cells, runner) if cfg.bisection.enabled else []
    finally:
        if writer is not None:
            writer.close()

    if out_dir is not None:
        rows = read_results(os.path.join(out_dir, "results.csv"))
    else:
        order = [(c.cell_id, t) for c in cells for t in range(cfg.trials)]
        rows = [runner.rows[k] for k in order]
        rows += [v for k, v in runner.rows.items() if k not in set(order)]
    summary = summarize(rows, cfg, m_star)
    if out_dir is not None:
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return SweepReport(rows, summary, out_dir)


def _blank_timing(row, timing):
    if not timing:
        row[-1] = ""
    return row


def _run_bisection(cfg, cells, runner):
    """m* per group of cells that agree on everything but m."""
    b = cfg.bisection
    bases = list(dict.fromkeys(replace(c, m=0) for c in cells))
    out = []
    for base in bases:
        if base.noise not in ("auto", "missing") or base.delta:
            continue

        def probe(m, base=base):
            cell = replace(base, m=m)
            runner.run([(cell, t) for t in range(b.trials)])
            return runner.success_rate(cell, b.trials)

        hi = base.n - 1 if b.hi is None else min(int(b.hi), base.n - 1)
        m_star, probes = bisect_m(probe, int(b.lo), hi, b.target)
        freqs = dict(probes)
        for c in cells:
            if replace(c, m=0) == base and c.m not in freqs:
                freqs[c.m] = runner.success_rate(c, cfg.trials)
        violations = monotonicity_violations(freqs)
        for v in violations:
            log.warning("success frequency rises with m for %s: f(%d)=%.2f < f(%d)=%.2f",
                        base.cell_id, *v)
        out.append({"n": base.n, "L": base.L, "d": base.d, "kappa": base.kappa,
                    "lambda": base.lam, "m_star": m_star, "target": b.target,
                    "trials": b.trials,
                    "probes": [[m, f] for m, f in sorted(probes.items())],
                    "violations": [list(v) for v in violations]})
    return out
