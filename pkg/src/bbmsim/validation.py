"""Invariant battery behind the `validate` CLI subcommand.

Quick, deterministic spot checks of the exact laws and structural invariants
(seeded, so a pass is reproducible).  The pytest suite runs the same checks
at full scale; this battery is sized to finish in well under a minute.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from . import analytic
from .analytic import SQRT2
from .core import SimConfig, endpoint_survey, init
from .estimators import (
    F_EXP_SQRT2,
    F_ONE,
    many_to_one_check,
    many_to_two_check,
    pair_sum_quadrature,
)
from .experiments import ExperimentSpec, _record_line, config_digest, run_replicate
from .observables import assign_labels, sigma_M_sample, theta, track_T, track_tau
from .rng import mix64


def _check_analytic_identities(seed, n):
    for s in (1.0, 4.0, 9.0):
        for ratio in (1.5, 2.0, 3.0, 5.0):
            a = ratio * math.sqrt(s)
            lo, hi = analytic.gauss_tail_bounds(s, a)
            exact = analytic.gauss_tail_exact(s, a)
            if not (lo <= exact <= hi):
                return False, f"sandwich violated at s={s}, a={a}"
    for s in (0.5, 1.0, 3.0):
        for a in (-1.0, 0.0, 2.0):
            if abs(analytic.gauss_tail_exact(s, a)
                   + analytic.gauss_tail_exact(s, -a) - 1.0) > 1e-12:
                return False, "tail complementarity broken"
    total = sum(analytic.geometric_pmf(1.0, k) for k in range(1, 200))
    if abs(total - 1.0) > 1e-12:
        return False, f"geometric pmf normalization {total}"
    rates = [analytic.biggins_rate(a) for a in np.linspace(0, 1.4, 50)]
    if not all(x > y for x, y in zip(rates, rates[1:])):
        return False, "biggins_rate not strictly decreasing"
    if abs(analytic.bridge_exp_moment(2.0, 2.0, 1.5) - math.exp(SQRT2 * 1.5)) > 1e-12:
        return False, "bridge pinned-end moment wrong"
    return True, "sandwich grid, symmetry, pmf, rate monotonicity, bridge ends"


def _check_geometric_law(seed, n):
    sv = endpoint_survey(mix64(seed, 1), n, 1.0)
    p = math.exp(-1.0)
    kmax = max(2, int(np.quantile(sv.n_alive, 0.999)))
    obs = np.bincount(np.minimum(sv.n_alive, kmax), minlength=kmax + 1)[1:]
    exp_p = np.array([analytic.geometric_pmf(1.0, k) for k in range(1, kmax)]
                     + [(1 - p) ** (kmax - 1)])
    pval = stats.chisquare(obs, exp_p * n).pvalue
    mean_ok = abs(sv.n_alive.mean() - math.e) < 0.01 * math.e
    ok = pval > 0.001 and mean_ok
    return ok, f"chi2 p={pval:.4f}, mean={sv.n_alive.mean():.4f} (e={math.e:.4f})"


def _check_sigma_m_law(seed, n):
    M = 3
    draws = np.array([sigma_M_sample(SimConfig(seed=mix64(seed, i), horizon=50.0), M)[0]
                      for i in range(n)])
    pval = stats.kstest(draws, lambda s: np.where(s > 0, (1 - np.exp(-s)) ** M, 0.0)).pvalue
    return pval > 0.001, f"KS p={pval:.4f} over {n} draws (M={M})"


def _check_many_to_one(seed, n):
    for sub, (F, label) in enumerate(((F_ONE, "const"), (F_EXP_SQRT2, "exp"))):
        lhs, rhs = many_to_one_check(F, 1.5, n, seed=mix64(seed, 400 + sub))
        se = math.hypot(lhs.std_error, rhs.std_error)
        if abs(lhs.mean - rhs.mean) > 3.0 * se:
            return False, f"{label}: lhs {lhs.mean:.3f} vs rhs {rhs.mean:.3f} (3se={3*se:.3f})"
    return True, "branching sums match single-path expectations at t=1.5"


def _check_martingale_mean(seed, n):
    t = 2.0
    sv = endpoint_survey(mix64(seed, 5), n, t,
                         weights={"W": (lambda x: np.exp(SQRT2 * x - 2.0 * t), None)})
    w = sv.sums["W"]
    se = w.std(ddof=1) / math.sqrt(n)
    return abs(w.mean() - 1.0) <= 3.0 * se, f"mean={w.mean():.4f} (3se={3*se:.4f})"


def _check_crossing_monotone(seed, n):
    ys = [0.4, 0.8, 1.2]
    bad = 0
    for i in range(n):
        cfg = SimConfig(seed=mix64(seed, 100 + i), horizon=8.0, dt=0.02,
                        max_particles=200_000, prune_gap=6.0)
        recs = track_T(init(cfg), ys, horizon=8.0)
        times = [r.time for r in recs]
        if not all(b >= a - 1e-12 for a, b in zip(times, times[1:])):
            bad += 1
    return bad == 0, f"coupled thresholds monotone in {n - bad}/{n} runs"


def _check_lead_structure(seed, n):
    bad = 0
    for i in range(n):
        cfg = SimConfig(seed=mix64(seed, 200 + i), horizon=12.0, dt=0.02,
                        max_particles=100_000)
        pop = init(cfg)
        pop.advance_to(0.5)
        labeling = assign_labels(pop, 0.5)
        taus = track_tau(pop, labeling, horizon=12.0)
        th = theta(taus)
        mono = all(b >= a for a, b in zip(labeling.led_sizes, labeling.led_sizes[1:]))
        dominates = all(th.time >= r.time - 1e-12 for r in taus.values()
                        if not r.censored) or th.censored
        if not (mono and dominates):
            bad += 1
    return bad == 0, f"theta dominates taus and led set monotone in {n - bad}/{n} runs"


def _check_pair_sum(seed, n):
    est = many_to_two_check(1.0, (-math.inf, math.inf), n, seed=mix64(seed, 9))
    target = pair_sum_quadrature(1.0, (-math.inf, math.inf))
    ok = abs(est.mean - target) <= 3.0 * est.std_error
    return ok, f"MC {est.mean:.2f} vs quadrature {target:.2f} (3se={3*est.std_error:.2f})"


def _check_determinism(seed, n):
    spec = ExperimentSpec(kind="crossing",
                          params={"y": [0.5], "horizon": 4.0, "dt": 0.01,
                                  "max_particles": 100_000},
                          replicates=3, master_seed=seed)
    digest = config_digest(spec)
    lines = []
    for _ in range(2):
        batch = []
        for i in range(spec.replicates):
            r = run_replicate(spec.kind, spec.params, spec.master_seed, i)
            r.config_digest = digest
            batch.append(_record_line(r))
        lines.append("\n".join(batch))
    return lines[0] == lines[1], "rerun produced identical records"


def _check_extrema_cache(seed, n):
    for i in range(n):
        cfg = SimConfig(seed=mix64(seed, 300 + i), horizon=5.0)
        pop = init(cfg)
        pop.advance_to(3.0)
        snap = pop.snapshot()
        positions = [p for _, p, _ in snap]
        ids = [j for j, _, _ in snap]
        rid, rpos = pop.rightmost
        lid, lpos = pop.leftmost
        if rpos != max(positions) or lpos != min(positions):
            return False, "extrema mismatch"
        if rid != min(j for j, p, _ in snap if p == rpos):
            return False, "rightmost tie rule broken"
        if lid != min(j for j, p, _ in snap if p == lpos):
            return False, "leftmost tie rule broken"
        if ids != sorted(ids):
            return False, "snapshot not id-ordered"
    return True, f"extrema equal brute-force max/min in {n} runs"


_CHECKS = [
    ("analytic identities", _check_analytic_identities, 0, 0),
    ("geometric population law", _check_geometric_law, 20_000, 5_000),
    ("branch-time law (sigma_M)", _check_sigma_m_law, 20_000, 4_000),
    ("many-to-one identity", _check_many_to_one, 20_000, 5_000),
    ("additive martingale mean one", _check_martingale_mean, 20_000, 5_000),
    ("coupled crossing monotonicity", _check_crossing_monotone, 25, 8),
    ("lead-time structure", _check_lead_structure, 30, 10),
    ("pair-sum identity", _check_pair_sum, 20_000, 5_000),
    ("determinism", _check_determinism, 0, 0),
    ("extrema caches", _check_extrema_cache, 50, 15),
]


def run_battery(quick: bool = False, seed: int = 2024, verbose: bool = True) -> dict:
    """Run the invariant suite; returns a report dict and prints a table."""
    rows = []
    all_passed = True
    for name, fn, n_full, n_quick in _CHECKS:
        n = n_quick if quick else n_full
        passed, detail = fn(seed, n)
        all_passed &= passed
        rows.append({"name": name, "passed": passed, "detail": detail})
        if verbose:
            print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    if verbose:
        print(f"{'all checks passed' if all_passed else 'SOME CHECKS FAILED'}")
    return {"all_passed": all_passed, "checks": rows}
