"""Monte Carlo cross-validation layer.

Identity checks (many-to-one, pair sums), tail-frequency estimation against
the analytic bounds, and log-scale exponent regression.  Replicate streams
are derived per index as in the simulator; reductions are deterministic in
replicate order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .analytic import SQRT2, bridge_exp_moment, lalley_sellke_bound
from .core import SimConfig, checkpoints, endpoint_survey, init
from .errors import DegenerateDesign, InvalidConfig
from .rng import StreamRng, mix64


@dataclass
class McEstimate:
    """Monte Carlo mean with its standard error."""

    mean: float
    std_error: float
    n: int
    censored_fraction: float = 0.0


@dataclass
class SlopeFit:
    """Weighted least-squares line with a bootstrap confidence interval."""

    slope: float
    intercept: float
    slope_ci95: tuple[float, float]
    points: list[tuple[float, float, float]] = field(default_factory=list)


@dataclass
class LeftTailReport:
    """Left-tail frequency paired with its mirror-image right-tail frequency
    and the analytic bound; `diff_se` is the standard error of the paired
    difference of the two indicator means."""

    left: McEstimate
    right: McEstimate
    diff: float
    diff_se: float
    bound: float


class PathFunctional:
    """Functional of a discretized path, F(times, values) -> float.

    When `endpoint` is given the functional depends on the final position
    only and estimators may skip path recording.
    """

    def __init__(self, fn=None, endpoint=None, name: str = "F"):
        if fn is None and endpoint is None:
            raise InvalidConfig("PathFunctional needs fn or endpoint")
        self._fn = fn
        self.endpoint = endpoint
        self.name = name

    @property
    def endpoint_only(self) -> bool:
        return self.endpoint is not None

    def __call__(self, times: np.ndarray, values: np.ndarray) -> float:
        if self._fn is not None:
            return float(self._fn(times, values))
        return float(self.endpoint(values[-1]))


F_ONE = PathFunctional(endpoint=lambda x: 1.0, name="1")
F_ENDPOINT_NONNEG = PathFunctional(endpoint=lambda x: 1.0 if x >= 0 else 0.0,
                                   name="endpoint>=0")
F_EXP_SQRT2 = PathFunctional(endpoint=lambda x: math.exp(SQRT2 * x),
                             name="exp(sqrt2*endpoint)")


def _mc(values: np.ndarray, censored: int = 0) -> McEstimate:
    values = np.asarray(values, dtype=float)
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(mean=float(values.mean()), std_error=se, n=n,
                      censored_fraction=censored / n if n else 0.0)


def many_to_one_check(F: PathFunctional, t: float, n: int, *,
                      seed: int, dt: float = 0.05) -> tuple[McEstimate, McEstimate]:
    """Estimate both sides of the identity between the branching sum of a path
    functional and e^t times its single-path expectation.

    lhs: mean over n runs of sum_u F(ancestral path of u at time t)
    rhs: e^t times the mean of F over n independent Brownian paths

    Endpoint-only functionals skip path recording (both sides use endpoint
    draws); general functionals are evaluated on the checkpoint grid.
    """
    if F.endpoint_only:
        g = np.vectorize(F.endpoint, otypes=[float])
        sv = endpoint_survey(mix64(seed, 1), n, t, weights={"F": (g, None)})
        lhs_vals = sv.sums["F"]
        rng = StreamRng(mix64(seed, 2))
        endpoints = rng.generator.standard_normal(n) * math.sqrt(t)
        rhs_vals = g(endpoints)
    else:
        lhs_vals = np.empty(n)
        grid = checkpoints(0.0, t, dt)
        if grid.size == 0 or abs(grid[-1] - t) > 1e-9:
            grid = np.append(grid, t)
        times = np.concatenate([[0.0], grid])
        for i in range(n):
            lhs_vals[i] = _branching_path_sum(F, t, grid, mix64(seed, i))
        rng = StreamRng(mix64(seed, n + 1))
        rhs_vals = np.empty(n)
        steps = np.sqrt(np.diff(times))
        for i in range(n):
            incr = rng.generator.standard_normal(steps.size) * steps
            path = np.concatenate([[0.0], np.cumsum(incr)])
            rhs_vals[i] = F(times, path)
    rhs = _mc(rhs_vals)
    scale = math.exp(t)
    rhs.mean *= scale
    rhs.std_error *= scale
    return _mc(lhs_vals), rhs


def _branching_path_sum(F: PathFunctional, t: float, grid: np.ndarray,
                        seed: int) -> float:
    """Sum of F over the ancestral checkpoint paths of one population."""
    cfg = SimConfig(seed=seed, horizon=t + 1.0,
                    dt=float(grid[0]) if grid.size else t)
    pop = init(cfg)
    hist_ids = []
    hist_pos = []
    for tg in grid:
        pop.advance_to(float(tg))
        idx = np.flatnonzero(pop.alive[:pop.n_slots])
        hist_ids.append(pop.ident[idx].copy())
        hist_pos.append(pop.pos[idx].copy())
    times = np.concatenate([[0.0], grid])
    total = 0.0
    final_ids = hist_ids[-1]
    for j, ident in enumerate(final_ids):
        path = np.empty(times.size)
        path[0] = 0.0
        for m in range(len(grid)):
            anc = pop.ancestor_at(int(ident), float(grid[m]))
            row = np.searchsorted(hist_ids[m], anc)
            path[m + 1] = hist_pos[m][row]
        total += F(times, path)
    return total


def pair_sum_quadrature(k: float, window: tuple[float, float]) -> float:
    """Common-ancestor integral for the expected pair sum
    E[sum_{u in window} sum_{w != u} exp(sqrt2 (X_w(k) - X_u(k)))]:

        2 int_0^k e^{3k-2s} E[e^{sqrt2 B_s - sqrt2 B_k}; B_k in [ak, bk]] ds

    with the inner conditional expectation expressed through the Brownian
    bridge exponential moment.
    """
    a, b = window
    lo = max(a * k, -40.0 * math.sqrt(k) - SQRT2 * k) if np.isfinite(a) else -40.0 * math.sqrt(k) - SQRT2 * k
    hi = min(b * k, 40.0 * math.sqrt(k)) if np.isfinite(b) else 40.0 * math.sqrt(k)

    def integrand(x, s):
        gauss = math.exp(-x * x / (2.0 * k)) / math.sqrt(2.0 * math.pi * k)
        return (math.exp(3.0 * k - 2.0 * s) * gauss * math.exp(-SQRT2 * x)
                * bridge_exp_moment(k, s, x))

    val, _ = integrate.dblquad(integrand, 0.0, k, lambda s: lo, lambda s: hi,
                               epsabs=1e-10, epsrel=1e-10)
    return 2.0 * val


def many_to_two_check(k: float, window: tuple[float, float], n: int, *,
                      seed: int) -> McEstimate:
    """MC estimate of the pair sum whose expectation `pair_sum_quadrature`
    integrates: over ordered pairs (u, w), u restricted to the window."""
    a, b = window
    pos_window = (a * k if np.isfinite(a) else -np.inf,
                  b * k if np.isfinite(b) else np.inf)
    sv = endpoint_survey(mix64(seed, 1), n, k, weights={
        "W": (lambda x: np.exp(SQRT2 * x), None),
        "A": (lambda x: np.exp(-SQRT2 * x), pos_window),
        "C": (lambda x: np.ones_like(x), pos_window),
    })
    # sum over u in the window of (e^{-sqrt2 X_u} W - 1), W the full exp sum
    S = sv.sums["A"] * sv.sums["W"] - sv.sums["C"]
    return _mc(S)


def front_tail_estimate(t: float, y: float, n: int, *, seed: int) -> McEstimate:
    """Empirical frequency of R(t) > m(t) + y with binomial standard error.

    The analytic counterpart is bramson_upper(y); its validity domain
    2 <= y <= sqrt(t) is the caller's concern.
    """
    from .analytic import m_of_t
    level = m_of_t(t) + y
    sv = endpoint_survey(mix64(seed, 1), n, t)
    hits = (sv.rightmost > level).astype(float)
    return _mc(hits)


def left_tail_estimate(s: float, mu: float, n: int, *, seed: int) -> LeftTailReport:
    """Frequencies of L(s) <= -mu s and of R(s) >= mu s on the same runs,
    their paired difference, and the analytic bound for both."""
    if mu < SQRT2:
        raise InvalidConfig(f"left_tail_estimate requires mu >= sqrt(2), got {mu}")
    sv = endpoint_survey(mix64(seed, 1), n, s)
    lhits = (sv.leftmost <= -mu * s).astype(float)
    rhits = (sv.rightmost >= mu * s).astype(float)
    d = lhits - rhits
    return LeftTailReport(
        left=_mc(lhits),
        right=_mc(rhits),
        diff=float(d.mean()),
        diff_se=float(d.std(ddof=1) / math.sqrt(n)),
        bound=lalley_sellke_bound(s, mu),
    )


def exponent_fit(points, *, n_boot: int = 2000, seed: int = 0) -> SlopeFit:
    """Weighted least squares of y on x over (x, y, weight) points with a
    case-resampling bootstrap CI for the slope.

    Points are canonicalized by sorting before the bootstrap, so the fit is
    invariant under permutation of the input.
    """
    pts = sorted((float(x), float(y), float(w)) for x, y, w in points)
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    w = np.array([p[2] for p in pts])
    if np.unique(x).size < 2:
        raise DegenerateDesign("exponent_fit needs >= 2 distinct scales")
    if np.any(w < 0):
        raise DegenerateDesign("weights must be nonnegative")
    slope, intercept = _wls(x, y, w)
    rng = np.random.Generator(np.random.PCG64(mix64(seed, 0xF17)))
    slopes = []
    m = x.size
    for _ in range(n_boot):
        idx = rng.integers(0, m, size=m)
        if np.unique(x[idx]).size < 2:
            continue
        slopes.append(_wls(x[idx], y[idx], w[idx])[0])
    if slopes:
        lo, hi = np.percentile(slopes, [2.5, 97.5])
    else:
        lo = hi = slope
    return SlopeFit(slope=slope, intercept=intercept,
                    slope_ci95=(float(lo), float(hi)), points=pts)


def _wls(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    sw = w.sum()
    if sw <= 0:
        raise DegenerateDesign("total weight must be positive")
    xb = (w * x).sum() / sw
    yb = (w * y).sum() / sw
    sxx = (w * (x - xb) ** 2).sum()
    if sxx <= 0:
        raise DegenerateDesign("no spread in scales")
    slope = (w * (x - xb) * (y - yb)).sum() / sxx
    return float(slope), float(yb - slope * xb)


def median_log_times(records, *, include_censored: bool = False) -> tuple[float, float]:
    """(median of log time, censored fraction) over crossing records.

    Censored observations are lower bounds; by default they are excluded from
    the median and only reported through the fraction.  With
    include_censored=True they enter at their lower-bound value, making the
    result itself a lower-bound-flavored median.
    """
    times = [r.time for r in records if not r.censored]
    cens = [r.time for r in records if r.censored]
    frac = len(cens) / (len(times) + len(cens)) if (times or cens) else 0.0
    pool = times + (cens if include_censored else [])
    if not pool:
        return math.nan, frac
    return float(np.median(np.log(pool))), frac
