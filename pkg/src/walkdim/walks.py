"""Exit times of uniform walks, in graph and measure flavors.

Graph mode: the walk steps uniformly over a vertex's neighbors (self-loop
included) and the expected exit time E from a ball B solves

    E = 1 + P E   on vertices inside B,   E = 0 outside.

Measure mode: the walk jumps from x to y in the open ball B_r(x) with
probability w(y) / mu(B_r(x)), and the same equation holds state by state
over the cloud.  The renormalized variant replaces the unit cost of a step
by r**beta(x), turning step counts into time.

Both walks are reversible for an explicit weighting (vertex degrees, or
mu_r(x) = mu(B_r(x)) w(x)), so the system is solved as a symmetric
positive-definite one by preconditioned conjugate gradients, falling back
to a sparse LU factorization when CG stalls.  The defining equation's
relative sup-norm residual is recorded on every field and checked against
the solver tolerance either way.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from .errors import (
    NoExitError,
    PathCapWarning,
    SingularSolveError,
    ValidationError,
)
from .geometry import BallSpec, MeasureWeights, PointCloud, squared_dist
from .nets import WalkGraph

_TREE_SLACK = 1e-9
SOLVER_TOL = 1e-10


@dataclass
class ExitTimeField:
    """Expected exit counts (or times, when renormalized) per state.

    States are net positions in graph mode and cloud indices in measure
    mode.  Values vanish identically outside the ball.
    """

    ball: BallSpec
    scale: float
    mode: str
    values: np.ndarray
    inside: np.ndarray
    sup_value: float
    solver_residual: float
    renormalized: bool = False
    solver_iterations: int = 0


@dataclass
class BetaField:
    """Per-point walk exponent with the ball radius each value was read at."""

    values: np.ndarray
    radii_used: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValidationError("beta values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, n: int, value: float) -> "BetaField":
        return cls(np.full(n, float(value)))


def ball_volumes(cloud: PointCloud, mu: MeasureWeights, r: float,
                 subset: np.ndarray | None = None) -> np.ndarray:
    """mu-mass of the open r-ball around each point of ``subset`` (default all)."""
    if not (r > 0):
        raise ValidationError("jump radius must be positive")
    idx = np.arange(len(cloud)) if subset is None else np.asarray(subset, dtype=np.intp)
    w = mu.weights
    r2 = r * r
    out = np.empty(idx.size)
    lists = cloud.tree.query_ball_point(cloud.coords[idx], r * (1.0 + _TREE_SLACK))
    for k, cand in enumerate(lists):
        cand = np.asarray(cand, dtype=np.intp)
        hit = cand[squared_dist(cloud.coords[cand], cloud.coords[idx[k]]) < r2]
        out[k] = w[hit].sum()
    return out


def measure_kernel_rows(cloud: PointCloud, mu: MeasureWeights, r: float,
                        rows: np.ndarray):
    """Open-ball neighbor lists and ball masses for the given row states.

    Returns (neighbors, volumes): per row the sorted cloud indices strictly
    inside the r-ball (the point itself always included) and the total
    mu-mass of that ball.
    """
    w = mu.weights
    r2 = r * r
    rows = np.asarray(rows, dtype=np.intp)
    nbrs = []
    vols = np.empty(rows.size)
    lists = cloud.tree.query_ball_point(cloud.coords[rows], r * (1.0 + _TREE_SLACK))
    for k, cand in enumerate(lists):
        cand = np.sort(np.asarray(cand, dtype=np.intp))
        hit = cand[squared_dist(cloud.coords[cand], cloud.coords[rows[k]]) < r2]
        nbrs.append(hit)
        vols[k] = w[hit].sum()
    return nbrs, vols


def inside_mask(cloud: PointCloud, ball: BallSpec) -> np.ndarray:
    mask = np.zeros(len(cloud), dtype=bool)
    mask[cloud.ball_query(ball)] = True
    return mask


def _equation_residual(P_in, x, rhs):
    denom = np.abs(x).max() if x.size else 1.0
    if denom == 0.0:
        return 0.0
    return float(np.abs(x - rhs - P_in @ x).max() / denom)


def _solve_substochastic(P_in: sp.spmatrix, rhs: np.ndarray, tol: float,
                         sym_weights: np.ndarray, maxiter: int = 100_000):
    """Solve (I - P) x = rhs; report the relative sup-norm residual.

    Multiplying through by diag(sym_weights) makes the system symmetric
    positive definite, so Jacobi-preconditioned CG applies; if it cannot
    reach the tolerance the dense of sparse LU route takes over.
    """
    m = rhs.size
    D = sym_weights
    A = sp.diags(D) @ (sp.identity(m, format="csr") - P_in)
    A = ((A + A.T) * 0.5).tocsr()  # exact reversibility up to roundoff
    b = D * rhs
    diag = A.diagonal()
    M = LinearOperator((m, m), matvec=lambda v: v / diag)
    count = {"n": 0}

    def tick(_):
        count["n"] += 1

    x, info = cg(A, b, rtol=min(tol * 1e-2, 1e-12), atol=0.0, maxiter=maxiter, M=M,
                 callback=tick)
    iterations = count["n"]
    residual = _equation_residual(P_in, x, rhs) if info == 0 else np.inf
    if info != 0 or not np.isfinite(residual) or residual > tol:
        try:
            x = splu(A.tocsc()).solve(b)
        except RuntimeError as exc:
            raise SingularSolveError(f"exit-time system is singular: {exc}") from exc
        residual = _equation_residual(P_in, x, rhs)
        iterations = 1  # one factorization
    if not np.isfinite(residual) or residual > tol:
        raise SingularSolveError(
            f"exit-time solve residual {residual:.3e} above tolerance {tol:.0e}",
            residual=residual,
        )
    return x, float(residual), iterations


def exit_time_graph(graph: WalkGraph, cloud: PointCloud, ball: BallSpec,
                    tol: float = SOLVER_TOL) -> ExitTimeField:
    """Expected steps to leave the ball, for the uniform walk on a net graph."""
    idx = graph.net.net_indices
    center = cloud.coords[ball.center_index]
    d2 = squared_dist(cloud.coords[idx], center)
    r2 = ball.radius * ball.radius
    inside = d2 <= r2 if ball.closed else d2 < r2
    if inside.all():
        raise NoExitError("every net point lies in the ball; the walk cannot exit")
    m = int(inside.sum())
    values = np.zeros(len(graph))
    residual = 0.0
    if m:
        pos = np.flatnonzero(inside)
        loc = -np.ones(len(graph), dtype=np.intp)
        loc[pos] = np.arange(m)
        ii, jj, vv = [], [], []
        for a, u in enumerate(pos):
            nbrs = graph.adjacency[u]
            p = 1.0 / graph.degrees[u]
            for v in nbrs:
                if loc[v] >= 0:
                    ii.append(a)
                    jj.append(loc[v])
                    vv.append(p)
        P_in = sp.csr_matrix((vv, (ii, jj)), shape=(m, m))
        sol, residual, iters = _solve_substochastic(P_in, np.ones(m), tol,
                                                    graph.degrees[pos].astype(float))
        values[pos] = sol
    else:
        iters = 0
    return ExitTimeField(ball=ball, scale=graph.net.epsilon, mode="graph",
                         values=values, inside=inside, sup_value=float(values.max(initial=0.0)),
                         solver_residual=residual, solver_iterations=iters)


def _measure_system(cloud, mu, r, ball):
    inside = inside_mask(cloud, ball)
    outside_mass = mu.total - mu.mass(np.flatnonzero(inside))
    if not (outside_mass > 0):
        raise NoExitError("the ball exhausts the cloud's mass; no exit exists")
    pos = np.flatnonzero(inside)
    m = pos.size
    loc = -np.ones(len(cloud), dtype=np.intp)
    loc[pos] = np.arange(m)
    nbrs, vols = measure_kernel_rows(cloud, mu, r, pos)
    w = mu.weights
    ii, jj, vv = [], [], []
    for a in range(m):
        hit = nbrs[a]
        keep = loc[hit] >= 0
        cols = loc[hit[keep]]
        ii.append(np.full(cols.size, a))
        jj.append(cols)
        vv.append(w[hit[keep]] / vols[a])
    P_in = sp.csr_matrix(
        (np.concatenate(vv), (np.concatenate(ii), np.concatenate(jj))), shape=(m, m)
    )
    mu_r = vols * w[pos]
    return inside, pos, P_in, mu_r


def exit_time_measure(cloud: PointCloud, mu: MeasureWeights, r: float, ball: BallSpec,
                      tol: float = SOLVER_TOL) -> ExitTimeField:
    """Expected steps of the mu-uniform r-step walk before it leaves the ball."""
    inside, pos, P_in, mu_r = _measure_system(cloud, mu, r, ball)
    values = np.zeros(len(cloud))
    sol, residual, iters = _solve_substochastic(P_in, np.ones(pos.size), tol, mu_r)
    values[pos] = sol
    return ExitTimeField(ball=ball, scale=float(r), mode="measure", values=values,
                         inside=inside, sup_value=float(values.max(initial=0.0)),
                         solver_residual=residual, solver_iterations=iters)


def exit_time_renormalized(cloud: PointCloud, mu: MeasureWeights, r: float,
                           ball: BallSpec, beta: BetaField,
                           tol: float = SOLVER_TOL) -> ExitTimeField:
    """Expected exit time when a step at x costs r**beta(x) instead of 1."""
    if beta.values.shape != (len(cloud),):
        raise ValidationError("beta field must have one value per cloud point")
    inside, pos, P_in, mu_r = _measure_system(cloud, mu, r, ball)
    rhs = r ** beta.values[pos]
    values = np.zeros(len(cloud))
    sol, residual, iters = _solve_substochastic(P_in, rhs, tol, mu_r)
    values[pos] = sol
    return ExitTimeField(ball=ball, scale=float(r), mode="measure", values=values,
                         inside=inside, sup_value=float(values.max(initial=0.0)),
                         solver_residual=residual, renormalized=True,
                         solver_iterations=iters)


@dataclass
class MCExitResult:
    """Sample mean exit count with a normal 95% half-width.

    Paths that hit the step cap are counted in ``capped_paths`` and left
    out of the mean; they are never truncated into it.
    """

    mean: float
    ci95: float
    n_paths: int
    capped_paths: int = 0


def _path_rng(rng_seed: int, path_id: int) -> np.random.Generator:
    # splittable child streams: one counter-based key per path, so results
    # do not depend on how paths are batched across threads
    return np.random.Generator(np.random.Philox(key=np.array([rng_seed, path_id],
                                                             dtype=np.uint64)))


def mc_exit_time(cloud: PointCloud, mode, scale: float, ball: BallSpec, start: int,
                 n_paths: int, rng_seed: int, step_cap: int = 10_000_000) -> MCExitResult:
    """Monte Carlo estimate of the expected exit count from ``start``.

    ``mode`` is either a WalkGraph (uniform neighbor steps; ``start`` is a
    net position) or a MeasureWeights (mu-uniform jumps in open
    ``scale``-balls; ``start`` is a cloud index).  A start outside the ball
    returns (0, 0) immediately.
    """
    if n_paths <= 0:
        raise ValidationError("need at least one path")
    if isinstance(mode, WalkGraph):
        graph = mode
        idx = graph.net.net_indices
        d2 = squared_dist(cloud.coords[idx], cloud.coords[ball.center_index])
        r2 = ball.radius * ball.radius
        inside = d2 <= r2 if ball.closed else d2 < r2
        if inside.all():
            raise NoExitError("every net point lies in the ball; the walk cannot exit")
        if not (0 <= start < len(graph)):
            raise ValidationError("start must be a net position")
        rows = {int(u): graph.adjacency[u] for u in np.flatnonzero(inside)}
        cums = None
    elif isinstance(mode, MeasureWeights):
        mu = mode
        inside = inside_mask(cloud, ball)
        if not (mu.total - mu.mass(np.flatnonzero(inside)) > 0):
            raise NoExitError("the ball exhausts the cloud's mass; no exit exists")
        if not (0 <= start < len(cloud)):
            raise ValidationError("start must be a cloud index")
        pos = np.flatnonzero(inside)
        nbrs, _ = measure_kernel_rows(cloud, mu, scale, pos)
        rows = {}
        cums = {}
        for k, i in enumerate(pos):
            rows[int(i)] = nbrs[k]
            cums[int(i)] = np.cumsum(mu.weights[nbrs[k]])
    else:
        raise ValidationError("mode must be a WalkGraph or MeasureWeights")

    if not inside[start]:
        return MCExitResult(mean=0.0, ci95=0.0, n_paths=n_paths)

    counts = []
    capped = 0
    for pid in range(n_paths):
        rng = _path_rng(rng_seed, pid)
        state = start
        steps = 0
        while True:
            if steps >= step_cap:
                capped += 1
                break
            nbr = rows[state]
            if cums is None:
                state = int(nbr[int(rng.random() * nbr.size)])
            else:
                c = cums[state]
                state = int(nbr[np.searchsorted(c, rng.random() * c[-1], side="right")])
            steps += 1
            if not inside[state]:
                counts.append(steps)
                break
    if capped:
        warnings.warn(f"{capped} of {n_paths} paths hit the {step_cap}-step cap",
                      PathCapWarning, stacklevel=2)
    if not counts:
        return MCExitResult(mean=float("nan"), ci95=float("nan"),
                            n_paths=n_paths, capped_paths=capped)
    arr = np.asarray(counts, dtype=float)
    mean = float(arr.mean())
    ci = 1.96 * float(arr.std(ddof=1)) / np.sqrt(arr.size) if arr.size > 1 else float("inf")
    return MCExitResult(mean=mean, ci95=float(ci), n_paths=n_paths, capped_paths=capped)


@dataclass
class CTWalkPath:
    """Piecewise-constant trajectory: state ``states[k]`` holds on
    [times[k], times[k+1]), with exponential holding of mean scale**beta."""

    times: np.ndarray
    states: np.ndarray
    t_max: float


def simulate_ct_walk(cloud: PointCloud, mu: MeasureWeights, r: float, beta: BetaField,
                     t_max: float, start: int, rng_seed: int) -> CTWalkPath:
    """Continuous-time mu-uniform walk: hold Exp(mean r**beta(x)), then jump."""
    if beta.values.shape != (len(cloud),):
        raise ValidationError("beta field must have one value per cloud point")
    if not (0 <= start < len(cloud)):
        raise ValidationError("start out of range")
    if not (t_max > 0):
        raise ValidationError("t_max must be positive")
    rng = np.random.Generator(np.random.Philox(key=np.array([rng_seed, 0],
                                                            dtype=np.uint64)))
    row_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def row(i: int):
        if i not in row_cache:
            nbrs, _ = measure_kernel_rows(cloud, mu, r, np.array([i]))
            row_cache[i] = (nbrs[0], np.cumsum(mu.weights[nbrs[0]]))
        return row_cache[i]

    times = [0.0]
    states = [int(start)]
    t = 0.0
    state = int(start)
    while True:
        t = t + rng.exponential(r ** beta.values[state])
        if t > t_max:
            break
        nbr, c = row(state)
        state = int(nbr[np.searchsorted(c, rng.random() * c[-1], side="right")])
        times.append(t)
        states.append(state)
    return CTWalkPath(times=np.asarray(times), states=np.asarray(states, dtype=np.intp),
                      t_max=float(t_max))
