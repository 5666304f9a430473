"""Experiment runner: JSON config in, CSV tables and a JSON summary out.

Each experiment family gets one strict config schema (unknown fields are
rejected, every problem is reported, not just the first).  All randomness
flows through per-task RngStreams keyed by task index, and aggregation is
in fixed task order, so rerunning with a different worker count produces
byte-identical CSV outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundSet, classify_rates
from .cocycle import NumericalError, lyapunov_estimate, min_dev_scan, replica_rates
from .geomlab import GeomLemmaCase, archimedes_test, geom_lemma_grid
from .model import (
    Bernoulli,
    ConfigError,
    Gaussian,
    PointMass,
    PotentialModel,
    RngStream,
    UniformInterval,
    sample_potential,
)
from .spectrum import (
    FitPolicy,
    assemble_truncation,
    eigenpairs_in_window,
    fast_scan,
    fit_decay_rate,
)

EXPERIMENTS = ("lyapunov", "devscan", "fastscan", "eigdecay", "geomtest", "bounds")

_CSV_DOC = """\
config: one JSON object per experiment; common fields are
  experiment (must match the positional argument when present),
  master_seed (int >= 0), workers (int >= 1, default 1),
  output_dir (default "."); --seed/--workers/--out override them.

model objects: {"width": W, "kind": "schrodinger_strip", "site_law": LAW}
  or {"kind": "general_symmetric", "entry_law": LAW}
  or {"kind": "deterministic", "fixed_block": [[...], ...]}.
  LAW: {"law": "uniform", "lo": a, "hi": b} | {"law": "bernoulli", "a": x,
  "b": y, "p": q} | {"law": "point", "value": v} | {"law": "gaussian",
  "mean": m, "sd": s} (gaussian needs "allow_unbounded": true).

per-experiment fields:
  lyapunov  model, lambda, n, replicas; optional burn_in (default 64)
  devscan   model, interval [lo,hi], n, grid_points, seeds,
            reference {n, replicas, burn_in?}
  fastscan  model, center, radius, n, grid_points, seeds;
            optional eps, reference {n, replicas, burn_in?}
  eigdecay  model, length, window [lo,hi], seeds; optional fit
            {buffer, right_fraction, min_points, noise_floor, robust,
            max_center_fraction}, reference {lambda, n, replicas, burn_in?}
  geomtest  ambient_dim, block_dim, samples; optional cases
            [{log_scales, subspace_dim, threshold}, ...], case_samples
  bounds    either gammas [g1 >= ... > 0], or model, lambda, n, replicas
            (optional burn_in) to estimate them

CSV tables (first line is a comment naming config_sha256 and master_seed):
  lyapunov  lyapunov.csv   replica, mode, rate
  devscan   devscan.csv    seed, lambda, dev_short, dev_long, min_dev
  fastscan  fastscan.csv   seed, lambda, min_log_s
  eigdecay  eigdecay.csv   seed, lambda, center, rate, r_squared,
                           window_lo, window_hi
  geomtest  geomtest.csv   ambient_dim, block_dim, samples, ks_quadratic,
                           ks_linear, ks_critical_1pct
            geomcases.csv  case, subspace_dim, threshold, exponent_sum,
                           empirical_p
  bounds    bounds.csv     width, gamma1, gamma_w, floor, cap_general,
                           cap_width2, cap

exit codes: 0 ok, 2 config error, 3 numerical error.
"""


# ---------------------------------------------------------------------------
# config parsing


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


class _Schema:
    """Field reader over one JSON object that records every problem."""

    def __init__(self, obj: dict, where: str, errors: list):
        self.obj = obj
        self.where = where
        self.errors = errors
        self.seen = set()

    def _label(self, key) -> str:
        return f"{self.where}.{key}" if self.where else key

    def take(self, key, required=True, default=None):
        self.seen.add(key)
        if key not in self.obj:
            if required:
                self.errors.append(f"{self._label(key)}: required field missing")
            return default
        return self.obj[key]

    def integer(self, key, minimum=None, required=True, default=None):
        v = self.take(key, required=required, default=default)
        if v is default and key not in self.obj:
            return default
        if not isinstance(v, int) or isinstance(v, bool) or (minimum is not None and v < minimum):
            floor = "an integer" if minimum is None else f"an integer >= {minimum}"
            self.errors.append(f"{self._label(key)}: must be {floor}, got {v!r}")
            return None
        return v

    def number(self, key, minimum=None, positive=False, required=True, default=None):
        v = self.take(key, required=required, default=default)
        if v is default and key not in self.obj:
            return default
        bad = not _is_num(v)
        bad = bad or (minimum is not None and v < minimum)
        bad = bad or (positive and v <= 0)
        if bad:
            kind = "a finite number"
            if positive:
                kind += " > 0"
            elif minimum is not None:
                kind += f" >= {minimum}"
            self.errors.append(f"{self._label(key)}: must be {kind}, got {v!r}")
            return None
        return float(v)

    def boolean(self, key, required=True, default=None):
        v = self.take(key, required=required, default=default)
        if v is default and key not in self.obj:
            return default
        if not isinstance(v, bool):
            self.errors.append(f"{self._label(key)}: must be true or false, got {v!r}")
            return None
        return v

    def pair(self, key, required=True):
        v = self.take(key, required=required)
        if v is None:
            return None
        if not (isinstance(v, list) and len(v) == 2 and all(_is_num(x) for x in v) and v[0] < v[1]):
            self.errors.append(f"{self._label(key)}: must be [lo, hi] with lo < hi, got {v!r}")
            return None
        return (float(v[0]), float(v[1]))

    def finish(self):
        for k in sorted(set(self.obj) - self.seen):
            self.errors.append(f"{self._label(k)}: unknown field")


_LAW_FIELDS = {
    "uniform": ("lo", "hi"),
    "bernoulli": ("a", "b", "p"),
    "point": ("value",),
    "gaussian": ("mean", "sd"),
}
_LAW_TYPES = {
    "uniform": UniformInterval,
    "bernoulli": Bernoulli,
    "point": PointMass,
    "gaussian": Gaussian,
}


def _parse_law(obj, where, errors):
    if not isinstance(obj, dict):
        errors.append(f"{where}: must be an object")
        return None
    s = _Schema(obj, where, errors)
    name = s.take("law")
    if name not in _LAW_FIELDS:
        errors.append(f"{where}.law: must be one of {sorted(_LAW_FIELDS)}, got {name!r}")
        return None
    vals = [s.number(f) for f in _LAW_FIELDS[name]]
    s.finish()
    if any(v is None for v in vals):
        return None
    try:
        return _LAW_TYPES[name](*vals)
    except ConfigError as exc:
        errors.extend(f"{where}: {p}" for p in exc.problems)
        return None


def _parse_model(obj, where, errors):
    if not isinstance(obj, dict):
        errors.append(f"{where}: must be an object")
        return None
    s = _Schema(obj, where, errors)
    kind = s.take("kind")
    width = s.integer("width", minimum=1)
    allow = s.boolean("allow_unbounded", required=False, default=False)
    kwargs = {}
    if kind == "schrodinger_strip":
        raw = s.take("site_law")
        if raw is not None:
            kwargs["site_law"] = _parse_law(raw, f"{where}.site_law", errors)
    elif kind == "general_symmetric":
        raw = s.take("entry_law")
        if raw is not None:
            kwargs["entry_law"] = _parse_law(raw, f"{where}.entry_law", errors)
    elif kind == "deterministic":
        raw = s.take("fixed_block")
        if raw is not None:
            try:
                kwargs["fixed_block"] = np.asarray(raw, dtype=float)
            except (TypeError, ValueError):
                errors.append(f"{where}.fixed_block: must be a rectangular array of numbers")
    else:
        errors.append(
            f"{where}.kind: must be one of ('schrodinger_strip', 'general_symmetric', "
            f"'deterministic'), got {kind!r}"
        )
    s.finish()
    if width is None or kind not in ("schrodinger_strip", "general_symmetric", "deterministic"):
        return None
    if any(v is None for v in kwargs.values()):
        return None
    try:
        return PotentialModel(width, kind, allow_unbounded=bool(allow), **kwargs)
    except ConfigError as exc:
        errors.extend(f"{where}: {p}" for p in exc.problems)
        return None


def _model_field(s: _Schema, errors):
    raw = s.take("model")
    return _parse_model(raw, "model", errors) if raw is not None else None


def _parse_reference(obj, where, errors, need_lambda=False):
    if not isinstance(obj, dict):
        errors.append(f"{where}: must be an object")
        return None
    s = _Schema(obj, where, errors)
    out = {
        "n": s.integer("n", minimum=1),
        "replicas": s.integer("replicas", minimum=2),
        "burn_in": s.integer("burn_in", minimum=0, required=False, default=64),
    }
    if need_lambda:
        out["lambda"] = s.number("lambda")
    s.finish()
    return out


def _parse_lyapunov(s, errors):
    return {
        "model": _model_field(s, errors),
        "lam": s.number("lambda"),
        "n": s.integer("n", minimum=1),
        "replicas": s.integer("replicas", minimum=2),
        "burn_in": s.integer("burn_in", minimum=0, required=False, default=64),
    }


def _parse_devscan(s, errors):
    raw_ref = s.take("reference")
    return {
        "model": _model_field(s, errors),
        "interval": s.pair("interval"),
        "n": s.integer("n", minimum=2),
        "grid_points": s.integer("grid_points", minimum=2),
        "seeds": s.integer("seeds", minimum=1),
        "reference": _parse_reference(raw_ref, "reference", errors) if raw_ref is not None else None,
    }


def _parse_fastscan(s, errors):
    raw_ref = s.take("reference", required=False)
    return {
        "model": _model_field(s, errors),
        "center": s.number("center"),
        "radius": s.number("radius", positive=True),
        "n": s.integer("n", minimum=1),
        "grid_points": s.integer("grid_points", minimum=2),
        "seeds": s.integer("seeds", minimum=1),
        "eps": s.number("eps", minimum=0.0, required=False, default=0.0),
        "reference": _parse_reference(raw_ref, "reference", errors) if raw_ref is not None else None,
    }


def _parse_fit(obj, where, errors) -> FitPolicy:
    if not isinstance(obj, dict):
        errors.append(f"{where}: must be an object")
        return FitPolicy()
    s = _Schema(obj, where, errors)
    kw = {}
    v = s.integer("buffer", minimum=0, required=False)
    if v is not None:
        kw["buffer"] = v
    v = s.number("right_fraction", positive=True, required=False)
    if v is not None:
        if v > 1.0:
            errors.append(f"{where}.right_fraction: must be in (0, 1], got {v!r}")
        else:
            kw["right_fraction"] = v
    v = s.integer("min_points", minimum=2, required=False)
    if v is not None:
        kw["min_points"] = v
    v = s.number("noise_floor", minimum=0.0, required=False)
    if v is not None:
        kw["noise_floor"] = v
    v = s.boolean("robust", required=False)
    if v is not None:
        kw["robust"] = v
    v = s.number("max_center_fraction", positive=True, required=False)
    if v is not None:
        if v > 1.0:
            errors.append(f"{where}.max_center_fraction: must be in (0, 1], got {v!r}")
        else:
            kw["max_center_fraction"] = v
    s.finish()
    return FitPolicy(**kw)


def _parse_eigdecay(s, errors):
    raw_fit = s.take("fit", required=False)
    raw_ref = s.take("reference", required=False)
    return {
        "model": _model_field(s, errors),
        "length": s.integer("length", minimum=2),
        "window": s.pair("window"),
        "seeds": s.integer("seeds", minimum=1),
        "fit": _parse_fit(raw_fit, "fit", errors) if raw_fit is not None else FitPolicy(),
        "reference": (
            _parse_reference(raw_ref, "reference", errors, need_lambda=True)
            if raw_ref is not None
            else None
        ),
    }


def _parse_cases(obj, where, errors):
    if not isinstance(obj, list) or not obj:
        errors.append(f"{where}: must be a nonempty array of case objects")
        return []
    cases = []
    for i, item in enumerate(obj):
        wi = f"{where}[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{wi}: must be an object")
            continue
        s = _Schema(item, wi, errors)
        scales = s.take("log_scales")
        k = s.integer("subspace_dim", minimum=1)
        thr = s.number("threshold")
        s.finish()
        if scales is not None and not (isinstance(scales, list) and scales and all(_is_num(x) for x in scales)):
            errors.append(f"{wi}.log_scales: must be a nonempty array of finite numbers")
            scales = None
        if scales is None or k is None or thr is None:
            continue
        try:
            cases.append(GeomLemmaCase(tuple(float(x) for x in scales), k, thr))
        except ConfigError as exc:
            errors.extend(f"{wi}: {p}" for p in exc.problems)
    return cases


def _parse_geomtest(s, errors):
    ell = s.integer("ambient_dim", minimum=2)
    k = s.integer("block_dim", minimum=1)
    if ell is not None and k is not None and k >= ell:
        errors.append(f"block_dim: must be < ambient_dim, got {k} >= {ell}")
    samples = s.integer("samples", minimum=100)
    raw_cases = s.take("cases", required=False)
    cases = _parse_cases(raw_cases, "cases", errors) if raw_cases is not None else []
    return {
        "ambient_dim": ell,
        "block_dim": k,
        "samples": samples,
        "cases": cases,
        "case_samples": s.integer("case_samples", minimum=100, required=False, default=samples),
    }


def _parse_bounds(s, errors):
    if "gammas" in s.obj:
        raw = s.take("gammas")
        gammas = None
        if not (isinstance(raw, list) and raw and all(_is_num(x) for x in raw)):
            errors.append(f"gammas: must be a nonempty array of finite numbers, got {raw!r}")
        elif any(x <= 0 for x in raw) or any(a < b for a, b in zip(raw, raw[1:])):
            errors.append(f"gammas: must be positive and non-increasing, got {raw!r}")
        else:
            gammas = tuple(float(x) for x in raw)
        return {"gammas": gammas, "model": None}
    return {
        "gammas": None,
        "model": _model_field(s, errors),
        "lam": s.number("lambda"),
        "n": s.integer("n", minimum=1),
        "replicas": s.integer("replicas", minimum=2),
        "burn_in": s.integer("burn_in", minimum=0, required=False, default=64),
    }


_PARSERS = {
    "lyapunov": _parse_lyapunov,
    "devscan": _parse_devscan,
    "fastscan": _parse_fastscan,
    "eigdecay": _parse_eigdecay,
    "geomtest": _parse_geomtest,
    "bounds": _parse_bounds,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment: name, seed, resources, typed parameters.

    canonical is the JSON-safe echo of everything that determines the
    results (so not workers or output_dir); its hash stamps every output
    file.
    """

    experiment: str
    master_seed: int
    workers: int
    output_dir: str
    params: dict
    canonical: dict

    @property
    def config_sha256(self) -> str:
        text = json.dumps(self.canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def parse_config(
    text: str,
    experiment: str | None = None,
    master_seed: int | None = None,
    workers: int | None = None,
    output_dir: str | None = None,
) -> ExperimentConfig:
    """Parse and validate a JSON config, collecting every problem found.

    The keyword arguments are command-line overrides; experiment, when
    given, must agree with any "experiment" field in the file.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(obj, dict):
        raise ConfigError(["config must be a JSON object"])
    errors: list = []
    s = _Schema(obj, "", errors)
    exp = s.take("experiment", required=experiment is None, default=experiment)
    if exp is not None and exp not in EXPERIMENTS:
        errors.append(f"experiment: must be one of {EXPERIMENTS}, got {exp!r}")
        exp = None
    elif experiment is not None and exp != experiment:
        errors.append(f"experiment: config says {exp!r} but the command line says {experiment!r}")
    seed = s.integer("master_seed", minimum=0, required=master_seed is None, default=master_seed)
    if master_seed is not None:
        seed = master_seed
    wk = s.integer("workers", minimum=1, required=False, default=1)
    if workers is not None:
        wk = workers
    od = s.take("output_dir", required=False, default=".")
    if not isinstance(od, str):
        errors.append(f"output_dir: must be a string, got {od!r}")
        od = "."
    if output_dir is not None:
        od = output_dir
    params = _PARSERS[exp](s, errors) if exp in _PARSERS else {}
    s.finish()
    if not isinstance(wk, int):
        wk = 1
    if workers is not None and workers < 1:
        errors.append(f"workers: must be an integer >= 1, got {workers!r}")
    if master_seed is not None and master_seed < 0:
        errors.append(f"master_seed: must be an integer >= 0, got {master_seed!r}")
    if errors:
        raise ConfigError(errors)
    canonical = {k: v for k, v in obj.items() if k not in ("workers", "output_dir")}
    canonical["experiment"] = exp
    canonical["master_seed"] = seed
    return ExperimentConfig(exp, seed, wk, od, params, canonical)


# ---------------------------------------------------------------------------
# execution


def _ordered_map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _tag_stream(stream: RngStream) -> str:
    return f"stream {stream.stream_id}:{'/'.join(map(str, stream.spawn_path))}"


def _lyap_task(task):
    model, lam, n, burn_in, stream = task
    try:
        return replica_rates(model, lam, n, burn_in, stream)
    except NumericalError as exc:
        raise NumericalError(f"{_tag_stream(stream)}: {exc}") from exc


def _ref_task(task):
    model, lam, n, replicas, burn_in, stream = task
    est = lyapunov_estimate(model, lam, n, replicas, stream, burn_in)
    return est.gammas


def _devscan_task(task):
    model, interval, n, grid_points, table, stream = task
    try:
        return min_dev_scan(model, interval, n, grid_points, table, stream)
    except NumericalError as exc:
        raise NumericalError(f"{_tag_stream(stream)}: {exc}") from exc


def _fastscan_task(task):
    model, center, radius, n, grid_points, thresholds, gamma1, eps, stream = task
    blocks = sample_potential(model, n, stream)
    try:
        return fast_scan(blocks, center, radius, n, grid_points, thresholds, gamma1, eps)
    except NumericalError as exc:
        raise NumericalError(f"{_tag_stream(stream)}: {exc}") from exc


def _eig_task(task):
    model, length, window, policy, stream = task
    try:
        op = assemble_truncation(model, length, stream)
        pairs = eigenpairs_in_window(op, window)
    except NumericalError as exc:
        raise NumericalError(f"{_tag_stream(stream)}: {exc}") from exc
    rows = []
    for pair in pairs:
        fit = fit_decay_rate(pair, policy)
        if fit is None:
            continue
        rows.append(
            (pair.energy, pair.center, fit.rate, fit.r_squared, fit.window[0], fit.window[1])
        )
    return len(pairs), rows


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows, cfg: ExperimentConfig):
    with open(path, "w", newline="") as f:
        f.write(f"# config_sha256={cfg.config_sha256} master_seed={cfg.master_seed}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _safe_bounds(gammas):
    try:
        return BoundSet.from_gammas(gammas)
    except ConfigError:
        return None


def _run_lyapunov(cfg: ExperimentConfig, out: Path):
    p = cfg.params
    rng = RngStream(cfg.master_seed, 0)
    tasks = [(p["model"], p["lam"], p["n"], p["burn_in"], rng.child(r)) for r in range(p["replicas"])]
    results = _ordered_map(_lyap_task, tasks, cfg.workers)
    rates = np.array([r for r, _ in results])
    gammas = rates.mean(axis=0)
    se = rates.std(axis=0, ddof=1) / math.sqrt(len(results))
    rows = [
        (r, j + 1, rates[r, j]) for r in range(rates.shape[0]) for j in range(rates.shape[1])
    ]
    _write_csv(out / "lyapunov.csv", ("replica", "mode", "rate"), rows, cfg)
    W = p["model"].width
    bset = _safe_bounds(gammas[:W])
    headline = {
        "gammas": gammas,
        "gamma_1": gammas[0],
        "std_errors": se,
        "pairing_residual": max(pr for _, pr in results),
        "burn_in": p["burn_in"],
        "n": p["n"],
        "replicas": p["replicas"],
    }
    return headline, bset.as_dict() if bset else None


def _run_devscan(cfg: ExperimentConfig, out: Path):
    p = cfg.params
    model = p["model"]
    rng = RngStream(cfg.master_seed, 0)
    lambdas = np.linspace(p["interval"][0], p["interval"][1], p["grid_points"])
    ref = p["reference"]
    ref_root = rng.child(0)
    ref_tasks = [
        (model, float(lam), ref["n"], ref["replicas"], ref["burn_in"], ref_root.child(i))
        for i, lam in enumerate(lambdas)
    ]
    table = np.array(_ordered_map(_ref_task, ref_tasks, cfg.workers))[:, : model.width]
    seed_root = rng.child(1)
    tasks = [
        (model, p["interval"], p["n"], p["grid_points"], table, seed_root.child(s))
        for s in range(p["seeds"])
    ]
    scans = _ordered_map(_devscan_task, tasks, cfg.workers)
    rows = []
    for sidx, scan in enumerate(scans):
        for i in range(len(scan.lambdas)):
            rows.append((sidx, scan.lambdas[i], scan.dev_short[i], scan.dev_long[i], scan.combined[i]))
    _write_csv(out / "devscan.csv", ("seed", "lambda", "dev_short", "dev_long", "min_dev"), rows, cfg)
    sups = [scan.sup_combined for scan in scans]
    headline = {
        "sup_min_dev_per_seed": sups,
        "max_sup_min_dev": max(sups),
        "n": p["n"],
        "long_horizon": p["n"] * p["n"],
        "reference": ref,
    }
    return headline, None


def _run_fastscan(cfg: ExperimentConfig, out: Path):
    p = cfg.params
    model = p["model"]
    rng = RngStream(cfg.master_seed, 0)
    thresholds = None
    gamma1 = None
    bset = None
    if p["reference"] is not None:
        ref = p["reference"]
        est = lyapunov_estimate(
            model, p["center"], ref["n"], ref["replicas"], rng.child(0), ref["burn_in"]
        )
        g = est.gammas[: model.width]
        gamma1 = float(g[0])
        bset = _safe_bounds(g)
        if bset is not None:
            thresholds = {"floor": bset.floor, "cap": bset.cap}
    seed_root = rng.child(1)
    tasks = [
        (model, p["center"], p["radius"], p["n"], p["grid_points"], thresholds, gamma1, p["eps"], seed_root.child(s))
        for s in range(p["seeds"])
    ]
    reports = _ordered_map(_fastscan_task, tasks, cfg.workers)
    rows = [
        (sidx, rep.lambdas[i], rep.min_log_s[i])
        for sidx, rep in enumerate(reports)
        for i in range(len(rep.lambdas))
    ]
    _write_csv(out / "fastscan.csv", ("seed", "lambda", "min_log_s"), rows, cfg)
    headline = {
        "global_min_per_seed": [rep.global_min for rep in reports],
        "global_min": min(rep.global_min for rep in reports),
        "grid_spacing": reports[0].grid_spacing,
        "lipschitz_log_slack": reports[0].lipschitz_log_slack,
        "gamma_thresholds": thresholds,
        "n": p["n"],
        "eps": p["eps"],
    }
    return headline, bset.as_dict() if bset else None


def _run_eigdecay(cfg: ExperimentConfig, out: Path):
    p = cfg.params
    model = p["model"]
    rng = RngStream(cfg.master_seed, 0)
    seed_root = rng.child(1)
    tasks = [
        (model, p["length"], p["window"], p["fit"], seed_root.child(s)) for s in range(p["seeds"])
    ]
    per_seed = _ordered_map(_eig_task, tasks, cfg.workers)
    rows = []
    all_rates = []
    total_pairs = 0
    for sidx, (n_pairs, items) in enumerate(per_seed):
        total_pairs += n_pairs
        for energy, center, rate, r2, lo, hi in items:
            rows.append((sidx, energy, center, rate, r2, lo, hi))
            all_rates.append(rate)
    _write_csv(
        out / "eigdecay.csv",
        ("seed", "lambda", "center", "rate", "r_squared", "window_lo", "window_hi"),
        rows,
        cfg,
    )
    bset = None
    classification = None
    if p["reference"] is not None:
        ref = p["reference"]
        est = lyapunov_estimate(
            model, ref["lambda"], ref["n"], ref["replicas"], rng.child(0), ref["burn_in"]
        )
        g = est.gammas[: model.width]
        bset = _safe_bounds(g)
        if bset is not None and all_rates:
            cls = classify_rates(g, all_rates)
            classification = {
                "counts": cls.counts,
                "fractions": cls.fractions,
                "delta": cls.delta,
            }
    rates_arr = np.asarray(all_rates)
    headline = {
        "eigenpairs": total_pairs,
        "fitted": len(all_rates),
        "rate_min": rates_arr.min() if all_rates else None,
        "rate_median": np.median(rates_arr) if all_rates else None,
        "rate_max": rates_arr.max() if all_rates else None,
        "classification": classification,
    }
    return headline, bset.as_dict() if bset else None


def _run_geomtest(cfg: ExperimentConfig, out: Path):
    p = cfg.params
    rng = RngStream(cfg.master_seed, 0)
    rep = archimedes_test(p["ambient_dim"], p["block_dim"], p["samples"], rng.child(0))
    _write_csv(
        out / "geomtest.csv",
        ("ambient_dim", "block_dim", "samples", "ks_quadratic", "ks_linear", "ks_critical_1pct"),
        [(rep.ambient_dim, rep.block_dim, rep.samples, rep.ks_quadratic, rep.ks_linear, rep.ks_critical_1pct)],
        cfg,
    )
    headline = rep.as_dict()
    headline["ks_statistic"] = rep.ks_quadratic
    if p["cases"]:
        grid = geom_lemma_grid(p["cases"], p["case_samples"], rng.child(1))
        lrows = [
            (i, r.case.subspace_dim, r.case.threshold, r.exponent_sum, r.empirical_p)
            for i, r in enumerate(grid.reports)
        ]
        _write_csv(
            out / "geomcases.csv",
            ("case", "subspace_dim", "threshold", "exponent_sum", "empirical_p"),
            lrows,
            cfg,
        )
        headline["lemma"] = {
            "fitted_c": grid.fitted_c,
            "slope": grid.slope,
            "intercept": grid.intercept,
            "case_samples": p["case_samples"],
        }
    return headline, None


def _run_bounds(cfg: ExperimentConfig, out: Path):
    p = cfg.params
    estimated = None
    if p["gammas"] is not None:
        g = np.asarray(p["gammas"])
    else:
        rng = RngStream(cfg.master_seed, 0)
        tasks = [
            (p["model"], p["lam"], p["n"], p["burn_in"], rng.child(r)) for r in range(p["replicas"])
        ]
        results = _ordered_map(_lyap_task, tasks, cfg.workers)
        rates = np.array([r for r, _ in results])
        g = rates.mean(axis=0)[: p["model"].width]
        estimated = {"lambda": p["lam"], "n": p["n"], "replicas": p["replicas"]}
    bset = BoundSet.from_gammas(g)
    _write_csv(
        out / "bounds.csv",
        ("width", "gamma1", "gamma_w", "floor", "cap_general", "cap_width2", "cap"),
        [(bset.width, bset.gamma1, bset.gamma_w, bset.floor, bset.cap_general,
          "" if bset.cap_width2 is None else bset.cap_width2, bset.cap)],
        cfg,
    )
    headline = {"gammas": [float(x) for x in g], "cap": bset.cap, "estimated": estimated}
    return headline, bset.as_dict()


_RUNNERS = {
    "lyapunov": _run_lyapunov,
    "devscan": _run_devscan,
    "fastscan": _run_fastscan,
    "eigdecay": _run_eigdecay,
    "geomtest": _run_geomtest,
    "bounds": _run_bounds,
}


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_json_safe(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else None
    return x


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute a validated config; writes summary.json plus CSV tables.

    Returns the summary dict.  Everything except wall_time_s is a pure
    function of (canonical config, master_seed); CSV bytes in particular
    do not depend on the worker count.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    headline, bounds_dict = _RUNNERS[cfg.experiment](cfg, out)
    summary = {
        "experiment": cfg.experiment,
        "artifact_version": __version__,
        "config": cfg.canonical,
        "config_sha256": cfg.config_sha256,
        "master_seed": cfg.master_seed,
        "workers": cfg.workers,
        "bounds": bounds_dict,
        "headline": headline,
        "wall_time_s": time.perf_counter() - t0,
    }
    summary = _json_safe(summary)
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="artifact",
        description="Strip transfer-matrix experiments: Lyapunov spectra, deviation "
        "and fast-decay scans, eigenfunction decay fits, projection geometry, rate bounds.",
        epilog=_CSV_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="experiment family to run")
    parser.add_argument("--config", required=True, help="path to the JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override master_seed")
    parser.add_argument("--workers", type=int, default=None, help="worker processes")
    parser.add_argument("--out", default=None, help="override the output directory")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(
            text,
            experiment=args.experiment,
            master_seed=args.seed,
            workers=args.workers,
            output_dir=args.out,
        )
        run_experiment(cfg)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    print(f"{args.experiment}: wrote {Path(cfg.output_dir) / 'summary.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
