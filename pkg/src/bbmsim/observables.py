"""Waiting-time functionals measured on simulated populations.

All first-passage measurements are taken on the checkpoint grid of the
underlying run (resolution dt, values biased upward by at most dt) and are
censored, never extrapolated, when the horizon or the population budget cuts
a run short.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analytic import SQRT2, m_of_t
from .core import Population, SimConfig, checkpoints, init
from .errors import (
    InvalidConfig,
    PopulationBudgetExceeded,
    PruningForbidden,
    TruncatedPopulation,
)


@dataclass
class CrossingRecord:
    """One first-passage measurement on the checkpoint grid.

    kind        one of T_of_y | tau_label | theta | two_bbm
    threshold   y, z or label id, depending on kind
    time        grid first-passage value; a lower bound when censored
    resolution  grid spacing dt the value was measured at
    censored    horizon or budget reached without the crossing
    """

    kind: str
    threshold: float
    time: float
    resolution: float
    censored: bool = False


@dataclass
class SnapshotLabeling:
    """Partition of the time-s population into inherited labels.

    labels maps the particle ids alive at time s to label ids 0..N-1;
    position_of records their positions then; led is the set of labels that
    have owned the rightmost position since s (nondecreasing over time).
    """

    s: float
    labels: dict[int, int]
    leftmost_label: int
    led: set[int] = field(default_factory=set)
    position_of: dict[int, float] = field(default_factory=dict)
    led_sizes: list[int] = field(default_factory=list)


@dataclass
class CohortCount:
    """Count of particles at or below a linear threshold at time k."""

    k: float
    a: float
    count: int
    delta_variant: float | None = None


def track_T(state: Population, y, horizon: float) -> CrossingRecord | list[CrossingRecord]:
    """First grid time t >= 1 with R(t) - m(t) > y.

    `y` may be a single threshold or a sequence; a sequence is measured on the
    same realization (coupled), so the returned times are nondecreasing in y.
    Budget exhaustion censors all pending thresholds at the truncation time.
    """
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(ys <= 0):
        raise InvalidConfig(f"thresholds must be positive, got {y}")
    order = np.argsort(ys, kind="stable")
    records = [CrossingRecord("T_of_y", float(t), math.nan, state.config.dt)
               for t in ys]
    pending = [int(i) for i in order]

    dt = state.config.dt
    gamma = state.config.prune_gap
    refine = state.config.bridge_refine
    prev_ids = prev_pos = None
    prev_t = None
    grid = checkpoints(max(1.0 - dt, state.now), horizon, dt)
    grid = grid[grid >= 1.0 - 1e-12]
    for t in grid:
        t = float(t)
        try:
            state.advance_to(t)
        except PopulationBudgetExceeded:
            for i in pending:
                records[i].time = state.now
                records[i].censored = True
            return _unwrap(records, y)
        mt = m_of_t(t)
        _, r = state.rightmost
        excess = r - mt
        while pending and excess > records[pending[0]].threshold:
            records[pending[0]].time = t
            records[pending[0]].censored = False
            pending.pop(0)
        if refine and pending and prev_ids is not None:
            crossed = _bridge_crossings(state, prev_ids, prev_pos, prev_t, t,
                                        [records[i].threshold for i in pending])
            for j, i in enumerate(list(pending)):
                if crossed[j]:
                    records[i].time = t
                    records[i].censored = False
                    pending.remove(i)
        if not pending:
            return _unwrap(records, y)
        if refine:
            idx = np.flatnonzero(state.alive[:state.n_slots])
            prev_ids = state.ident[idx].copy()
            prev_pos = state.pos[idx].copy()
            prev_t = t
        if gamma is not None:
            state.prune(gamma)
    for i in pending:
        records[i].time = horizon
        records[i].censored = True
    return _unwrap(records, y)


def _unwrap(records, y):
    return records if np.ndim(y) else records[0]


def _bridge_crossings(state, prev_ids, prev_pos, prev_t, t, thresholds):
    """Stochastic intra-step crossing declarations for particles alive at both
    checkpoint ends, using the Brownian-bridge boundary-crossing probability
    exp(-2 a b / dt) against the linearized threshold."""
    idx = np.flatnonzero(state.alive[:state.n_slots])
    cur_ids = state.ident[idx]
    cur_pos = state.pos[idx]
    common, pi, ci = np.intersect1d(prev_ids, cur_ids, return_indices=True)
    if common.size == 0:
        return [False] * len(thresholds)
    x0 = prev_pos[pi]
    x1 = cur_pos[ci]
    delta = t - prev_t
    b0 = m_of_t(prev_t)
    b1 = m_of_t(t)
    out = []
    for y in thresholds:
        a = np.maximum(b0 + y - x0, 0.0)
        b = np.maximum(b1 + y - x1, 0.0)
        ab = a * b
        cand = np.flatnonzero(ab < 14.0 * delta)  # exp(-2ab/dt) below 1e-12 otherwise
        hit = False
        if cand.size:
            p = np.exp(-2.0 * ab[cand] / delta)
            u = state.rng.uniform(cand.size)
            hit = bool(np.any(u < p))
        out.append(hit)
    return out


def assign_labels(state: Population, s: float) -> SnapshotLabeling:
    """Give every particle alive at time s a distinct label that descendants
    inherit; marks lead tracking active, which forbids pruning."""
    if abs(state.now - s) > 1e-9:
        raise InvalidConfig(f"state is at t={state.now}, expected snapshot time {s}")
    if state.truncated:
        raise TruncatedPopulation("cannot label a truncated population")
    if state.pruned:
        raise PruningForbidden("cannot start lead tracking on a pruned population")
    idx = np.flatnonzero(state.alive[:state.n_slots])
    labels = {}
    position_of = {}
    for lbl, j in enumerate(idx):
        state.label[j] = lbl
        labels[int(state.ident[j])] = lbl
        position_of[lbl] = float(state.pos[j])
    jmin = idx[np.argmin(state.pos[idx])]
    state.labeling_active = True
    return SnapshotLabeling(s=s, labels=labels,
                            leftmost_label=int(state.label[jmin]),
                            position_of=position_of)


def track_tau(state: Population, labeling: SnapshotLabeling,
              horizon: float) -> dict[int, CrossingRecord]:
    """Per-label first grid time t > 0 (offset from s) at which the rightmost
    particle carries that label.  Labels still pending at the horizon or at a
    budget truncation come back censored with the elapsed offset as a lower
    bound."""
    if state.pruned:
        raise PruningForbidden("lead times need the full tree; population was pruned")
    s = labeling.s
    dt = state.config.dt
    n_labels = len(labeling.labels)
    taus: dict[int, CrossingRecord] = {}
    labeling.led_sizes.append(len(labeling.led))
    truncated_at = None
    for t in checkpoints(s, horizon, dt):
        t = float(t)
        try:
            state.advance_to(t)
        except PopulationBudgetExceeded:
            truncated_at = state.now
            break
        lbl = int(state.label[state.rightmost_slot()])
        if lbl not in labeling.led:
            labeling.led.add(lbl)
            taus[lbl] = CrossingRecord("tau_label", float(lbl), t - s, dt)
        labeling.led_sizes.append(len(labeling.led))
        if len(labeling.led) == n_labels:
            break
    bound = (truncated_at if truncated_at is not None else horizon) - s
    for lbl in labeling.labels.values():
        if lbl not in taus:
            taus[lbl] = CrossingRecord("tau_label", float(lbl), bound, dt,
                                       censored=True)
    return taus


def theta(tau_map: dict[int, CrossingRecord]) -> CrossingRecord:
    """Maximum of the uncensored lead times; censored (a lower bound) as soon
    as any label is censored."""
    if not tau_map:
        raise InvalidConfig("theta needs a nonempty tau map")
    recs = list(tau_map.values())
    dt = recs[0].resolution
    uncensored = [r.time for r in recs if not r.censored]
    any_censored = any(r.censored for r in recs)
    if uncensored:
        value = max(uncensored) if not any_censored else max(r.time for r in recs)
    else:
        value = max(r.time for r in recs)
    return CrossingRecord("theta", math.nan, value, dt, censored=any_censored)


def two_bbm_T(config_a: SimConfig, config_b: SimConfig, z,
              horizon: float) -> CrossingRecord | list[CrossingRecord]:
    """First grid time the rightmost of population A leads the rightmost of
    population B by more than z.  Multiple thresholds are measured on the same
    coupled pair of runs, so times are nondecreasing in z."""
    zs = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(zs < 0):
        raise InvalidConfig(f"lead thresholds must be >= 0, got {z}")
    if abs(config_a.dt - config_b.dt) > 1e-15:
        raise InvalidConfig("paired runs need identical checkpoint spacing")
    order = np.argsort(zs, kind="stable")
    records = [CrossingRecord("two_bbm", float(v), math.nan, config_a.dt)
               for v in zs]
    pending = [int(i) for i in order]
    pop_a = init(config_a)
    pop_b = init(config_b)
    dt = config_a.dt
    for t in checkpoints(0.0, horizon, dt):
        t = float(t)
        try:
            pop_a.advance_to(t)
            pop_b.advance_to(t)
        except PopulationBudgetExceeded:
            now = min(pop_a.now, pop_b.now)
            for i in pending:
                records[i].time = now
                records[i].censored = True
            return _unwrap(records, z)
        lead = pop_a.rightmost[1] - pop_b.rightmost[1]
        while pending and lead > records[pending[0]].threshold:
            records[pending[0]].time = t
            records[pending[0]].censored = False
            pending.pop(0)
        if not pending:
            return _unwrap(records, z)
        if config_a.prune_gap is not None:
            pop_a.prune(config_a.prune_gap)
        if config_b.prune_gap is not None:
            pop_b.prune(config_b.prune_gap)
    for i in pending:
        records[i].time = horizon
        records[i].censored = True
    return _unwrap(records, z)


def cohort_count(state: Population, k: float, a: float | None = None,
                 delta: float | None = None) -> CohortCount:
    """Exact count of particles with position <= -a k at time k.

    With delta given, the threshold slope is a = sqrt(2) (1 - delta/2), the
    sub-level cohort used for the leftmost-particle analysis.
    """
    if abs(state.now - k) > 1e-9:
        raise InvalidConfig(f"state is at t={state.now}, expected k={k}")
    if delta is not None:
        a = SQRT2 * (1.0 - delta / 2.0)
    if a is None:
        raise InvalidConfig("cohort_count needs a slope a or a delta")
    threshold = -(a * k) if k > 0 else 0.0
    count = int(np.count_nonzero(state.alive_positions() <= threshold))
    return CohortCount(k=k, a=float(a), count=count, delta_variant=delta)


def sigma_M_sample(config: SimConfig, M: int) -> tuple[float, float]:
    """Exact time of the M-th branch event (population first reaches M+1) and
    the leftmost position at that instant.  No grid error: branch times are
    exact."""
    if M < 1:
        raise InvalidConfig(f"M must be >= 1, got {M}")
    pop = init(config)
    sigma = pop.run_until_population(M + 1)
    return sigma, pop.leftmost[1]


def first_branch_after_snapshot(state: Population, labeling: SnapshotLabeling,
                                label: int) -> float:
    """Branch time of the time-s particle that carries `label` (nan if it has
    not branched); exposed to inspect which snapshot particle is slowest to
    place a descendant in the lead."""
    for ident, lbl in labeling.labels.items():
        if lbl == label:
            return float(state.branch_t[ident])
    raise KeyError(f"label {label} not in labeling")
