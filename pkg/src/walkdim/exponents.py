"""Scaling exponents read off log-log fits over geometric scale grids.

Three estimators share one regression core:

* alpha(x): slope of log mu(B_r(x)) against log r, the local volume
  growth exponent;
* beta(B): critical exponent of the sup exit count, the slope of
  log sup E against log(1/scale);
* beta(x): beta(B_R(x)) read at the smallest feasible R, with a flag when
  shrinking R fails to be monotone.

Grids are geometric (default ratio 2**-0.5) and must sit well inside the
window between sample resolution and cloud diameter; estimators refuse
grids that do not fit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DeltaTooSmallError,
    EmptyBallError,
    ValidationError,
    WindowTooNarrowError,
)
from .geometry import BallSpec, MeasureWeights, PointCloud
from .nets import build_epsilon_net, build_walk_graph
from .walks import exit_time_graph, exit_time_measure

DEFAULT_GRID_RATIO = 2.0 ** -0.5


def default_scale_grid(top: float, n: int = 8, ratio: float = DEFAULT_GRID_RATIO) -> np.ndarray:
    """Geometric grid top, top*ratio, ..., descending, n scales."""
    if not (top > 0) or not (0 < ratio < 1) or n < 2:
        raise ValidationError("need top > 0, 0 < ratio < 1 and at least two scales")
    return top * ratio ** np.arange(n)


@dataclass
class ScalingFit:
    """One log-log regression: exponent, intercept, and the data behind it."""

    exponent: float
    intercept: float
    scales: np.ndarray
    sup_values: np.ndarray
    envelope: str
    r_squared: float
    window: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "scales": [float(s) for s in self.scales],
            "sup_values": [float(v) for v in self.sup_values],
            "envelope": self.envelope,
            "r_squared": self.r_squared,
            "window": [self.window[0], self.window[1]],
        }


def _check_grid(scales: np.ndarray, minimum: int = 2) -> np.ndarray:
    scales = np.asarray(scales, dtype=float)
    if scales.size < minimum:
        raise WindowTooNarrowError(f"need at least {minimum} scales, got {scales.size}")
    if np.any(scales <= 0) or np.any(np.diff(scales) >= 0):
        raise ValidationError("scales must be positive and strictly decreasing")
    return scales


def fit_power_law(scales, values, against: str = "scale",
                  envelope: str = "plain") -> ScalingFit:
    """Least-squares slope of log values against log scales (or log 1/scales).

    With ``against='inverse-scale'`` the sign convention makes growth as
    scales shrink come out as a positive exponent.
    """
    scales = _check_grid(scales)
    values = np.asarray(values, dtype=float)
    if values.shape != scales.shape:
        raise ValidationError("values must align with scales")
    if np.any(values <= 0):
        raise ValidationError("log-log fit needs positive values")
    if against == "scale":
        x = np.log(scales)
    elif against == "inverse-scale":
        x = -np.log(scales)
    else:
        raise ValidationError(f"unknown regression axis {against!r}")
    y = np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(exponent=float(slope), intercept=float(intercept), scales=scales,
                      sup_values=values, envelope=envelope, r_squared=float(r2),
                      window=(float(scales[-1]), float(scales[0])))


def estimate_alpha_local(cloud: PointCloud, mu: MeasureWeights, x: int,
                         r_grid) -> ScalingFit:
    """Local volume growth exponent at cloud point x.

    The grid must contain at least 4 scales and fit strictly between three
    sample resolutions and half the diameter, so the fit sees neither the
    discreteness floor nor the whole space.
    """
    r_grid = _check_grid(r_grid, minimum=4)
    low, high = 3.0 * cloud.resolution(), cloud.diameter() / 2.0
    if r_grid[-1] < low or r_grid[0] > high:
        raise WindowTooNarrowError(
            f"r grid [{r_grid[-1]:.3g}, {r_grid[0]:.3g}] must lie within "
            f"({low:.3g}, {high:.3g}) for this cloud")
    masses = np.empty(r_grid.size)
    for k, r in enumerate(r_grid):
        members = cloud.ball_query(center_index=x, radius=float(r), closed=False)
        if members.size == 0:
            raise EmptyBallError(f"ball of radius {r} around point {x} is empty")
        masses[k] = mu.mass(members)
    return fit_power_law(r_grid, masses, against="scale")


def estimate_beta_ball(cloud: PointCloud, ball: BallSpec, mode: str, scale_grid,
                       envelope: str = "upper", *, mu: MeasureWeights | None = None,
                       graph_kind: str = "covering", graph_param: float | None = None,
                       net_seeds=(0,)) -> ScalingFit:
    """Walk exponent of a ball: slope of log sup E against log(1/scale).

    Graph mode rebuilds a fresh net and graph at every scale for each seed
    in ``net_seeds`` and folds the seeds with the requested envelope
    (upper = max, lower = min).  Measure mode uses the mu-uniform r-step
    walk.  Scales must not exceed a quarter of the ball radius.
    """
    scale_grid = _check_grid(scale_grid)
    if scale_grid[0] > ball.radius / 4.0:
        raise WindowTooNarrowError(
            f"largest scale {scale_grid[0]:.3g} exceeds ball radius / 4 = "
            f"{ball.radius / 4.0:.3g}")
    if envelope not in ("upper", "lower", "plain"):
        raise ValidationError(f"unknown envelope {envelope!r}")
    sups = np.empty(scale_grid.size)
    if mode == "measure":
        if mu is None:
            raise ValidationError("measure mode needs mu")
        for k, r in enumerate(scale_grid):
            sups[k] = exit_time_measure(cloud, mu, float(r), ball).sup_value
    elif mode == "graph":
        reduce = np.max if envelope in ("upper", "plain") else np.min
        for k, eps in enumerate(scale_grid):
            per_seed = []
            for seed in net_seeds:
                net = build_epsilon_net(cloud, float(eps), seed_index=int(seed))
                graph = build_walk_graph(cloud, net, kind=graph_kind, param=graph_param)
                per_seed.append(exit_time_graph(graph, cloud, ball).sup_value)
            sups[k] = reduce(per_seed)
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    if np.any(sups <= 0):
        raise ValidationError("sup exit count vanished; ball holds no states at some scale")
    fit = fit_power_law(scale_grid, sups, against="inverse-scale", envelope=envelope)
    return fit


@dataclass
class LocalBetaResult:
    """beta(x) read at the smallest feasible ball radius."""

    beta: float
    radii: np.ndarray
    fits: list[ScalingFit]
    monotone: bool
    flagged_radii: list[float] = field(default_factory=list)


def estimate_beta_local(cloud: PointCloud, x: int, R_grid, mode: str,
                        scales_per_R=None, monotone_tol: float = 0.1,
                        **kwargs) -> LocalBetaResult:
    """Fit beta(B_R(x)) across shrinking radii and read the limit candidate.

    ``scales_per_R`` maps a radius to its scale grid (default: 6 scales
    descending from R/4).  Shrinking the ball should not raise the
    exponent; radii that do by more than ``monotone_tol`` are flagged, not
    fatal.
    """
    R_grid = _check_grid(R_grid)
    if scales_per_R is None:
        scales_per_R = lambda R: default_scale_grid(R / 4.0, n=6)
    fits = []
    for R in R_grid:
        ball = BallSpec(center_index=x, radius=float(R), closed=True)
        fits.append(estimate_beta_ball(cloud, ball, mode, scales_per_R(float(R)),
                                       **kwargs))
    exps = np.array([f.exponent for f in fits])
    flagged = [float(R_grid[k + 1]) for k in range(exps.size - 1)
               if exps[k + 1] > exps[k] + monotone_tol]
    return LocalBetaResult(beta=float(exps[-1]), radii=R_grid, fits=fits,
                           monotone=not flagged, flagged_radii=flagged)


@dataclass
class AhlforsReport:
    """Variable-exponent regularity check: (1/C) mu(B_r(x)) <= r**Q(x) <= C mu(B_r(x)).

    ``C`` is the worst two-sided ratio over sample points and scales, and
    ``log_holder_C`` bounds |Q(x) - Q(y)| * (-log d(x, y)) over close pairs.
    """

    sample_points: np.ndarray
    Q: np.ndarray
    C: float
    passed: bool
    r_window: tuple[float, float]
    worst_point: int
    log_holder_C: float
    threshold: float

    def to_dict(self) -> dict:
        return {
            "sample_points": [int(i) for i in self.sample_points],
            "Q": [float(q) for q in self.Q],
            "C": self.C,
            "passed": self.passed,
            "r_window": [self.r_window[0], self.r_window[1]],
            "worst_point": int(self.worst_point),
            "log_holder_C": self.log_holder_C,
            "threshold": self.threshold,
        }


def fit_ahlfors(cloud: PointCloud, mu: MeasureWeights, r_window: tuple[float, float],
                sample_points, threshold: float = 50.0,
                n_scales: int = 6) -> AhlforsReport:
    """Fit per-point exponents Q and the regularity constant over a window."""
    lo, hi = float(r_window[0]), float(r_window[1])
    if not (0 < lo < hi):
        raise ValidationError("r_window must satisfy 0 < lo < hi")
    if n_scales < 4:
        raise ValidationError("need at least 4 scales")
    sample_points = np.asarray(sample_points, dtype=np.intp)
    if sample_points.size == 0:
        raise ValidationError("need at least one sample point")
    ratio = (lo / hi) ** (1.0 / (n_scales - 1))
    grid = hi * ratio ** np.arange(n_scales)
    Q = np.array([estimate_alpha_local(cloud, mu, int(x), grid).exponent
                  for x in sample_points])
    C = 1.0
    worst = int(sample_points[0])
    for q, x in zip(Q, sample_points):
        for r in grid:
            m = mu.mass(cloud.ball_query(center_index=int(x), radius=float(r),
                                         closed=False))
            ratio_here = (r ** q) / m
            two_sided = max(ratio_here, 1.0 / ratio_here)
            if two_sided > C:
                C = two_sided
                worst = int(x)
    log_holder = 0.0
    for a in range(sample_points.size):
        for b in range(a + 1, sample_points.size):
            d = cloud.distance(int(sample_points[a]), int(sample_points[b]))
            if 0.0 < d < 0.5:
                log_holder = max(log_holder, abs(Q[a] - Q[b]) * (-np.log(d)))
    return AhlforsReport(sample_points=sample_points, Q=Q, C=float(C),
                         passed=bool(C <= threshold), r_window=(lo, hi),
                         worst_point=worst, log_holder_C=float(log_holder),
                         threshold=float(threshold))


def local_hausdorff_weights(cloud: PointCloud, alpha_field, delta: float) -> MeasureWeights:
    """Weights from a greedy delta-cover gauged by |U| ** alpha(center).

    Covering balls of radius delta/2 are chosen greedily in index order;
    each contributes its member-set diameter raised to the local exponent
    (a singleton counts delta/2, and gauge 0 means a unit atom), split
    evenly over its members.  Requires delta >= 3 * resolution so balls
    actually hold neighbors.
    """
    alpha_field = np.asarray(alpha_field, dtype=float)
    if alpha_field.shape != (len(cloud),):
        raise ValidationError("alpha field must have one value per cloud point")
    if delta < 3.0 * cloud.resolution():
        raise DeltaTooSmallError(
            f"delta {delta:.3g} below 3x sample resolution {cloud.resolution():.3g}")
    n = len(cloud)
    covered = np.zeros(n, dtype=bool)
    weights = np.zeros(n)
    for i in range(n):
        if covered[i]:
            continue
        members = cloud.ball_query(center_index=i, radius=delta / 2.0, closed=True)
        covered[members] = True
        if members.size > 1:
            pts = cloud.coords[members]
            diam = 0.0
            for k in range(members.size - 1):
                diff = pts[k + 1 :] - pts[k]
                diam = max(diam, float(np.einsum("ij,ij->i", diff, diff).max()))
            diam = float(np.sqrt(diam))
        else:
            diam = delta / 2.0
        gauge = diam ** alpha_field[i] if diam > 0 else (1.0 if alpha_field[i] == 0 else 0.0)
        if gauge <= 0:
            gauge = np.finfo(float).tiny  # keep full support
        weights[members] += gauge / members.size
    return MeasureWeights(weights)
