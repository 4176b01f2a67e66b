"""Batch experiment runner: replicate orchestration, JSONL persistence,
manifests, and exponent-fit reports.

Determinism contract: replicate i of an experiment uses the stream seeded
with mix64(master_seed, i); results are reduced in replicate-index order, so
rerunning an experiment with the same master seed produces byte-identical
JSONL regardless of worker count.  Records carry only deterministic fields;
wall-clock data lives in the manifest.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import SimConfig, checkpoints, init
from .errors import InvalidConfig, PopulationBudgetExceeded
from .estimators import exponent_fit
from .observables import assign_labels, cohort_count, theta, track_T, track_tau, two_bbm_T
from .rng import mix64

KINDS = ("simulate", "crossing", "lead", "theta", "two-bbm", "cohort", "validate", "fit")

_REQUIRED = {
    "simulate": ("horizon",),
    "crossing": ("y", "horizon"),
    "lead": ("s", "horizon"),
    "theta": ("s", "horizon"),
    "two-bbm": ("z", "horizon"),
    "cohort": ("k",),
    "validate": (),
    "fit": ("inputs",),
}

_DEFAULTS = {"dt": 1e-3, "max_particles": 1_000_000}


@dataclass
class ExperimentSpec:
    """One batch experiment: what to run, how many times, and where to put it."""

    kind: str
    params: dict
    replicates: int = 1
    master_seed: int = 0
    output_path: str | None = None
    threads: int = 1

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown experiment kind {self.kind!r}")
        for key in _REQUIRED[self.kind]:
            if key not in self.params or self.params[key] is None:
                raise InvalidConfig(f"kind {self.kind!r} requires parameter {key!r}")
        if self.replicates < 1:
            raise InvalidConfig(f"replicates must be >= 1, got {self.replicates}")
        if self.kind == "cohort" and self.params.get("a") is None \
                and self.params.get("delta") is None:
            raise InvalidConfig("cohort requires a slope 'a' or a 'delta'")


@dataclass
class ReplicateResult:
    """Observables of one replicate; wall_time_ms is manifest-only data and is
    not part of the serialized JSONL schema."""

    replicate_index: int
    seed_used: int
    observables: dict
    truncated: bool
    wall_time_ms: float
    config_digest: str


@dataclass
class RunOutcome:
    exit_code: int
    results: list[ReplicateResult] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)
    report: dict | None = None


def config_digest(spec: ExperimentSpec) -> str:
    """Digest of the scientific content of a spec (kind, params, replicates,
    master seed); the output path and worker count do not change results and
    are excluded."""
    payload = dumps_json({
        "kind": spec.kind,
        "params": {k: spec.params[k] for k in sorted(spec.params)},
        "replicates": spec.replicates,
        "master_seed": spec.master_seed,
    })
    return hashlib.sha256(payload.encode()).hexdigest()


def dumps_json(obj) -> str:
    """Deterministic JSON with floats rendered at 17 significant digits."""
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            raise ValueError("non-finite value in serialized record")
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj)}")


def _censored(lower_bound: float) -> dict:
    return {"censored": True, "lower_bound": float(lower_bound)}


def _record_value(crossing_record) -> float | dict:
    if crossing_record.censored:
        return _censored(crossing_record.time)
    return float(crossing_record.time)


def _pick(params: dict, key: str, default):
    val = params.get(key)
    return default if val is None else val


def _sim_config(params: dict, seed: int, horizon_key: str = "horizon") -> SimConfig:
    return SimConfig(
        seed=seed,
        horizon=float(params[horizon_key]),
        dt=float(_pick(params, "dt", _DEFAULTS["dt"])),
        max_particles=int(_pick(params, "max_particles", _DEFAULTS["max_particles"])),
        prune_gap=params.get("prune_gap"),
        bridge_refine=bool(params.get("bridge_refine", False)),
    )


def run_replicate(kind: str, params: dict, master_seed: int, index: int) -> ReplicateResult:
    """Deterministic single-replicate execution (stream mix64(master_seed, index))."""
    seed = mix64(master_seed, index)
    t0 = time.perf_counter()
    fn = _REPLICATE_FNS[kind]
    observables, truncated = fn(params, seed)
    wall = (time.perf_counter() - t0) * 1e3
    return ReplicateResult(
        replicate_index=index,
        seed_used=seed,
        observables=observables,
        truncated=truncated,
        wall_time_ms=wall,
        config_digest="",  # filled by the orchestrator
    )


def _rep_simulate(params: dict, seed: int):
    cfg = _sim_config(params, seed)
    pop = init(cfg)
    truncated = False
    try:
        if cfg.prune_gap is not None:
            for t in checkpoints(0.0, cfg.horizon, cfg.dt):
                pop.advance_to(float(t))
                pop.prune(cfg.prune_gap)
            pop.advance_to(cfg.horizon)
        else:
            pop.advance_to(cfg.horizon)
    except PopulationBudgetExceeded:
        truncated = True
    _, right = pop.rightmost
    _, left = pop.leftmost
    obs = {
        "time": float(pop.now),
        "n_alive": int(pop.n_alive),
        "rightmost": right,
        "leftmost": left,
        "event_count": int(pop.event_count),
        "pruned": pop.pruned,
    }
    return obs, truncated


def _rep_crossing(params: dict, seed: int):
    cfg = _sim_config(params, seed)
    ys = params["y"] if isinstance(params["y"], (list, tuple)) else [params["y"]]
    pop = init(cfg)
    records = track_T(pop, list(ys), horizon=cfg.horizon)
    obs = {f"T_{y:g}": _record_value(r) for y, r in zip(ys, records)}
    return obs, pop.truncated


def _rep_lead(params: dict, seed: int):
    cfg = _sim_config(params, seed)
    s = float(params["s"])
    pop = init(cfg)
    pop.advance_to(s)
    labeling = assign_labels(pop, s)
    taus = track_tau(pop, labeling, horizon=cfg.horizon)
    obs = {f"tau_{lbl}": _record_value(r) for lbl, r in sorted(taus.items())}
    obs["tau_leftmost"] = _record_value(taus[labeling.leftmost_label])
    obs["n_labels"] = len(labeling.labels)
    obs["led_monotone"] = int(all(b >= a for a, b in
                                  zip(labeling.led_sizes, labeling.led_sizes[1:])))
    return obs, pop.truncated


def _rep_theta(params: dict, seed: int):
    cfg = _sim_config(params, seed)
    s = float(params["s"])
    pop = init(cfg)
    pop.advance_to(s)
    labeling = assign_labels(pop, s)
    taus = track_tau(pop, labeling, horizon=cfg.horizon)
    th = theta(taus)
    obs = {
        "theta": _record_value(th),
        "tau_leftmost": _record_value(taus[labeling.leftmost_label]),
        "n_labels": len(labeling.labels),
        "n_censored_labels": sum(1 for r in taus.values() if r.censored),
        "led_monotone": int(all(b >= a for a, b in
                                zip(labeling.led_sizes, labeling.led_sizes[1:]))),
    }
    return obs, pop.truncated


def _rep_two_bbm(params: dict, seed: int):
    zs = params["z"] if isinstance(params["z"], (list, tuple)) else [params["z"]]
    cfg_a = _sim_config(params, mix64(seed, 1))
    cfg_b = _sim_config(params, mix64(seed, 2))
    records = two_bbm_T(cfg_a, cfg_b, list(zs), horizon=float(params["horizon"]))
    obs = {f"T2_{z:g}": _record_value(r) for z, r in zip(zs, records)}
    truncated = any(r.censored and r.time < float(params["horizon"]) - 1e-9 for r in records)
    return obs, truncated


def _rep_cohort(params: dict, seed: int):
    k = float(params["k"])
    horizon = k + 1.0
    default_dt = min(_DEFAULTS["dt"], k / 2) if k > 0 else _DEFAULTS["dt"]
    cfg = SimConfig(seed=seed, horizon=horizon,
                    dt=float(_pick(params, "dt", default_dt)),
                    max_particles=int(_pick(params, "max_particles",
                                            _DEFAULTS["max_particles"])))
    pop = init(cfg)
    truncated = False
    try:
        pop.advance_to(k)
    except PopulationBudgetExceeded:
        truncated = True
    obs = {"n_alive": int(pop.n_alive), "time": float(pop.now)}
    if not truncated:
        if params.get("a") is not None:
            cc = cohort_count(pop, k, a=float(params["a"]))
            obs["count"] = cc.count
            obs["a"] = cc.a
        if params.get("delta") is not None:
            cc = cohort_count(pop, k, delta=float(params["delta"]))
            obs["count_delta"] = cc.count
            obs["delta"] = float(params["delta"])
    return obs, truncated


_REPLICATE_FNS = {
    "simulate": _rep_simulate,
    "crossing": _rep_crossing,
    "lead": _rep_lead,
    "theta": _rep_theta,
    "two-bbm": _rep_two_bbm,
    "cohort": _rep_cohort,
}


def _record_line(res: ReplicateResult) -> str:
    return dumps_json({
        "replicate_index": res.replicate_index,
        "seed_used": res.seed_used,
        "observables": res.observables,
        "truncated": res.truncated,
        "config_digest": res.config_digest,
    })


def parse_record(line: str) -> dict:
    """Inverse of the JSONL record schema."""
    return json.loads(line)


def run(spec: ExperimentSpec) -> RunOutcome:
    """Execute an experiment spec.

    Exit code 0 on success, 2 if any replicate hit the population budget
    (results are still written, flagged), 3 on invalid configuration.
    """
    try:
        spec.validate()
        if spec.kind == "validate":
            from .validation import run_battery
            report = run_battery(quick=bool(spec.params.get("quick", False)),
                                 seed=spec.master_seed)
            return RunOutcome(exit_code=0 if report["all_passed"] else 1, report=report)
        if spec.kind == "fit":
            report = fit_report(
                inputs=spec.params["inputs"],
                prefix=spec.params.get("prefix", "T_"),
                csv_path=spec.params.get("csv"),
                seed=spec.master_seed,
            )
            if spec.output_path:
                Path(spec.output_path).write_text(dumps_json(report) + "\n")
            return RunOutcome(exit_code=0, report=report)
        return _run_replicated(spec)
    except InvalidConfig:
        raise


def _run_replicated(spec: ExperimentSpec) -> RunOutcome:
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    digest = config_digest(spec)
    indices = list(range(spec.replicates))
    if spec.threads > 1 and spec.replicates > 1:
        with ProcessPoolExecutor(max_workers=spec.threads) as ex:
            results = list(ex.map(_replicate_star,
                                  [(spec.kind, spec.params, spec.master_seed, i)
                                   for i in indices],
                                  chunksize=max(1, spec.replicates // (8 * spec.threads))))
    else:
        results = [run_replicate(spec.kind, spec.params, spec.master_seed, i)
                   for i in indices]
    for r in results:
        r.config_digest = digest
    n_truncated = sum(r.truncated for r in results)
    wall_ms = (time.perf_counter() - t0) * 1e3
    manifest = {
        "spec": {
            "kind": spec.kind,
            "params": {k: spec.params[k] for k in sorted(spec.params)},
            "replicates": spec.replicates,
            "master_seed": spec.master_seed,
            "output_path": spec.output_path,
            "threads": spec.threads,
        },
        "tool_version": __version__,
        "config_digest": digest,
        "started_at": started.isoformat(),
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "wall_time_ms_total": wall_ms,
        "n_truncated": n_truncated,
    }
    if spec.output_path:
        out = Path(spec.output_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            for r in results:
                fh.write(_record_line(r) + "\n")
        manifest_path = out.with_name(out.name + ".manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    exit_code = 2 if n_truncated else 0
    return RunOutcome(exit_code=exit_code, results=results, manifest=manifest)


def _replicate_star(args):
    return run_replicate(*args)


def fit_report(inputs, prefix: str = "T_", csv_path: str | None = None,
               seed: int = 0, n_boot: int = 1000) -> dict:
    """Exponent-fit report over crossing-style JSONL outputs.

    Collects observables whose key starts with `prefix` (suffix parsed as the
    scale), computes the median log first-passage time per scale over
    uncensored replicates, fits scale vs median log time by weighted least
    squares, and attaches a bootstrap CI computed by resampling replicates
    within each scale.
    """
    by_scale: dict[float, list[tuple[float, bool]]] = {}
    for path in inputs:
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = parse_record(line)
                for key, val in rec["observables"].items():
                    if not key.startswith(prefix):
                        continue
                    try:
                        scale = float(key[len(prefix):])
                    except ValueError:
                        continue
                    if isinstance(val, dict):
                        by_scale.setdefault(scale, []).append((float(val["lower_bound"]), True))
                    else:
                        by_scale.setdefault(scale, []).append((float(val), False))
    scales = sorted(by_scale)
    table = []
    points = []
    for sc in scales:
        vals = np.array([t for t, c in by_scale[sc] if not c])
        n_cens = sum(1 for _, c in by_scale[sc] if c)
        n_all = len(by_scale[sc])
        med = float(np.median(np.log(vals))) if vals.size else math.nan
        table.append({
            "scale": sc,
            "median_log_time": med,
            "n_uncensored": int(vals.size),
            "censored_fraction": n_cens / n_all if n_all else 0.0,
        })
        if vals.size:
            points.append((sc, med, float(vals.size)))
    fit = exponent_fit(points, seed=seed) if len({p[0] for p in points}) >= 2 else None
    slope_ci = None
    if fit is not None:
        rng = np.random.Generator(np.random.PCG64(mix64(seed, 0xB007)))
        slopes = []
        for _ in range(n_boot):
            pts = []
            for sc in scales:
                vals = np.array([t for t, c in by_scale[sc] if not c])
                if vals.size == 0:
                    continue
                draw = vals[rng.integers(0, vals.size, vals.size)]
                pts.append((sc, float(np.median(np.log(draw))), float(vals.size)))
            if len({p[0] for p in pts}) >= 2:
                slopes.append(exponent_fit(pts, n_boot=0).slope)
        if slopes:
            lo, hi = np.percentile(slopes, [2.5, 97.5])
            slope_ci = (float(lo), float(hi))
    report = {
        "prefix": prefix,
        "scales": table,
        "slope": fit.slope if fit else None,
        "intercept": fit.intercept if fit else None,
        "slope_ci95": list(slope_ci) if slope_ci else (list(fit.slope_ci95) if fit else None),
    }
    if csv_path:
        lines = ["scale,median_log_time,n_uncensored,censored_fraction"]
        for row in table:
            lines.append(f"{row['scale']:.17g},{row['median_log_time']:.17g},"
                         f"{row['n_uncensored']},{row['censored_fraction']:.17g}")
        Path(csv_path).write_text("\n".join(lines) + "\n")
    return report
