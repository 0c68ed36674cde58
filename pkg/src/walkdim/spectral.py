"""Killed jump operators on a ball and their spectral quantities.

Killing the mu-uniform r-step walk outside a ball B leaves the
substochastic matrix P_B(x, y) = w(y) / mu(B_r(x)) on states inside B.
Everything here flows from two reversibility facts that hold exactly in
this discrete model:

* diag(mu_r) P_B is symmetric, where mu_r(x) = mu(B_r(x)) w(x);
* rescaling time by tau(x) = r**beta(x) keeps the generator self-adjoint
  when the reference measure picks up the extra density tau, which after
  normalizing over the whole cloud by Z_r gives nu_r.

The Green kernel is the inverse of (I - P_B) divided by the reference
measure of the column state; in the nu_r convention the extra Z_r factor
makes  sum_y g(x, y) nu_r(y)  reproduce the renormalized exit time
exactly, which the tests check.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .errors import (
    ConvergenceFailureError,
    DisconnectedSpaceWarning,
    EmptyComplementError,
    NumericalError,
    ValidationError,
)
from .geometry import BallSpec, MeasureWeights, PointCloud, squared_dist
from .walks import BetaField, ball_volumes, exit_time_measure, measure_kernel_rows

_TREE_SLACK = 1e-9
SYMMETRY_TOL = 1e-12
GREEN_SYMMETRY_TOL = 1e-8


@dataclass
class KilledOperator:
    """The walk kernel restricted to a ball, with its reference measures.

    ``inside`` lists the cloud indices of the retained states, in ascending
    order; ``P_B`` is indexed by positions into that list.  ``mu_r`` is the
    symmetrizing measure per state.  ``nu_r`` and ``Z_r`` are present only
    when a beta field was supplied.
    """

    ball: BallSpec
    r: float
    inside: np.ndarray
    P_B: sp.csr_matrix
    mu_r: np.ndarray
    beta: BetaField | None = None
    nu_r: np.ndarray | None = None
    Z_r: float | None = None

    @property
    def n_states(self) -> int:
        return self.inside.size

    def sym_factor(self) -> np.ndarray:
        return np.sqrt(self.mu_r)

    def symmetrized(self) -> sp.csr_matrix:
        """S = D^(1/2) P_B D^(-1/2): symmetric, same spectrum as P_B."""
        s = self.sym_factor()
        return sp.diags(s) @ self.P_B @ sp.diags(1.0 / s)


def build_killed_operator(cloud: PointCloud, mu: MeasureWeights, r: float,
                          ball: BallSpec, beta: BetaField | None = None,
                          check_connected: bool = True) -> KilledOperator:
    """Restrict the mu-uniform r-step kernel to the states inside a ball.

    Raises EmptyComplementError when nothing lies outside the ball (the
    killed operator would be stochastic and (I - P_B) singular).  A
    disconnected r-ball graph over the cloud only warns: far components
    simply never feel the killing.
    """
    if len(mu) != len(cloud):
        raise ValidationError("measure must weight every cloud point")
    inside = cloud.ball_query(ball)
    if inside.size == len(cloud):
        raise EmptyComplementError("ball covers the entire cloud; complement is empty")
    if inside.size == 0:
        raise ValidationError("ball contains no states")
    if check_connected and _r_graph_components(cloud, r) > 1:
        warnings.warn(f"ball graph at scale r={r} is disconnected",
                      DisconnectedSpaceWarning, stacklevel=2)
    nbrs, vols = measure_kernel_rows(cloud, mu, r, inside)
    m = inside.size
    loc = -np.ones(len(cloud), dtype=np.intp)
    loc[inside] = np.arange(m)
    w = mu.weights
    ii, jj, vv = [], [], []
    for a in range(m):
        hit = nbrs[a]
        keep = loc[hit] >= 0
        cols = loc[hit[keep]]
        ii.append(np.full(cols.size, a))
        jj.append(cols)
        vv.append(w[hit[keep]] / vols[a])
    P_B = sp.csr_matrix(
        (np.concatenate(vv), (np.concatenate(ii), np.concatenate(jj))), shape=(m, m)
    )
    mu_r = vols * w[inside]
    _check_reversibility(P_B, mu_r)
    nu_r = Z_r = None
    if beta is not None:
        if beta.values.shape != (len(cloud),):
            raise ValidationError("beta field must have one value per cloud point")
        vol_all = ball_volumes(cloud, mu, r)
        density = r ** beta.values * vol_all * w
        Z_r = float(density.sum())
        nu_r = density[inside] / Z_r
    return KilledOperator(ball=ball, r=float(r), inside=inside, P_B=P_B, mu_r=mu_r,
                          beta=beta, nu_r=nu_r, Z_r=Z_r)


def _r_graph_components(cloud: PointCloud, r: float) -> int:
    pairs = cloud.tree.query_pairs(r * (1.0 + _TREE_SLACK), output_type="ndarray")
    if pairs.size:
        d2 = squared_dist(cloud.coords[pairs[:, 0]] - cloud.coords[pairs[:, 1]],
                          np.zeros(cloud.ambient_dim))
        pairs = pairs[d2 < r * r]
    n = len(cloud)
    adj = sp.coo_matrix(
        (np.ones(pairs.shape[0]), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
    )
    ncomp, _ = connected_components(adj, directed=False)
    return int(ncomp)


def _check_reversibility(P_B: sp.csr_matrix, mu_r: np.ndarray) -> None:
    A = sp.diags(mu_r) @ P_B
    gap = abs(A - A.T)
    scale = abs(A).max() if A.nnz else 0.0
    if scale and gap.nnz and gap.max() > SYMMETRY_TOL * scale:
        raise NumericalError(
            f"diag(mu_r) P_B asymmetric beyond {SYMMETRY_TOL}: {gap.max() / scale:.3e}")
    rows = np.asarray(P_B.sum(axis=1)).ravel()
    if P_B.shape[0] and rows.max(initial=0.0) > 1.0 + 1e-12:
        raise NumericalError(f"row sums exceed 1: {rows.max():.17g}")


def spectral_radius_bound(op: KilledOperator, tol: float = 1e-10,
                          max_iter: int = 1_000_000):
    """Largest |eigenvalue| of P_B by power iteration on its symmetrization.

    The symmetrized matrix is entrywise nonnegative, so its top eigenvalue
    is the spectral radius; the iteration stops when the eigen-residual
    drops below ``tol``.  Returns (rho, iterations).
    """
    S = op.symmetrized()
    m = S.shape[0]
    if m == 1:
        return float(S[0, 0]), 0
    v = np.full(m, 1.0 / np.sqrt(m))
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = S @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0, it
        v = w / nrm
        Sv = S @ v
        lam = float(v @ Sv)
        if np.linalg.norm(Sv - lam * v) <= tol:
            return lam, it
    raise ConvergenceFailureError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations")


@dataclass
class GreenKernel:
    """Inverse kernel of (I - P_B) against a reference measure.

    ``convention`` records whether columns were divided by mu_r or scaled
    to the normalized nu_r; ``neumann_terms_used`` is None for the direct
    dense inverse.
    """

    matrix: np.ndarray
    convention: str
    neumann_terms_used: int | None = None


def green_kernel(op: KilledOperator, convention: str = "mu_r",
                 direct_threshold: int = 2000, term_tol: float = 1e-12,
                 term_cap: int = 1_000_000) -> GreenKernel:
    """Green kernel of the killed walk.

    Small systems invert (I - P_B) directly; larger ones sum the Neumann
    series I + P + P^2 + ... until the newest term is negligible.  In the
    mu_r convention  sum_y k(x, y) mu_r(y)  equals the expected exit count
    from x; the nu_r convention multiplies by Z_r so the same sum against
    nu_r gives the renormalized exit time.
    """
    if convention not in ("mu_r", "nu_r"):
        raise ValidationError(f"unknown Green convention {convention!r}")
    if convention == "nu_r" and op.Z_r is None:
        raise ValidationError("nu_r convention needs an operator built with a beta field")
    m = op.n_states
    terms = None
    if m <= direct_threshold:
        A = np.eye(m) - op.P_B.toarray()
        M = scipy.linalg.solve(A, np.eye(m))
    else:
        M = np.eye(m)
        T = np.eye(m)
        P = op.P_B.tocsr()
        for k in range(1, term_cap + 1):
            T = P @ T
            M += T
            t_max = np.abs(T).max()
            if t_max <= term_tol * np.abs(M).max():
                terms = k
                break
        else:
            rho, _ = spectral_radius_bound(op, tol=1e-8, max_iter=100_000)
            tail = np.abs(T).max() / max(1.0 - rho, np.finfo(float).tiny)
            warnings.warn(
                f"Neumann series hit the {term_cap}-term cap; estimated tail "
                f"{tail:.3e} at spectral radius {rho:.6f}", stacklevel=2)
            terms = term_cap
    if not np.isfinite(M).all():
        raise NumericalError(
            "Green solve produced non-finite entries; some state has no path "
            "out of the ball")
    neg = M.min()
    if neg < -1e-10 * max(np.abs(M).max(), 1.0):
        raise NumericalError(f"Green kernel has a genuinely negative entry: {neg:.3e}")
    M[M < 0.0] = 0.0
    if convention == "mu_r":
        g = M / op.mu_r[None, :]
    else:
        g = op.Z_r * M / op.mu_r[None, :]
    asym = np.abs(g - g.T).max()
    if asym > GREEN_SYMMETRY_TOL * max(np.abs(g).max(), 1.0):
        raise NumericalError(f"Green kernel asymmetry {asym:.3e} beyond tolerance")
    return GreenKernel(matrix=g, convention=convention, neumann_terms_used=terms)


@dataclass
class SpectralReport:
    """Bottom eigenvalue of a killed generator with its eigenvector."""

    lambda_1: float
    eigvec: np.ndarray
    iterations: int
    residual: float
    which: str
    n_states: int

    def to_dict(self) -> dict:
        return {
            "lambda_1": self.lambda_1,
            "iterations": self.iterations,
            "residual": self.residual,
            "which": self.which,
            "n_states": self.n_states,
        }


_DENSE_EIG_CUTOFF = 64
_LANCZOS_CUTOFF = 1500


def bottom_eigenvalue(op: KilledOperator, which: str = "L", tol: float = 1e-8,
                      max_iter: int = 10_000) -> SpectralReport:
    """Smallest eigenvalue of L = I - P_B or of the renormalized generator.

    ``which='L'`` works in the mu_r geometry; ``which='script_L'`` divides
    by tau = r**beta and works in the nu_r geometry (the operator the
    renormalized exit time solves against).  Small systems use inverse
    power iteration on the symmetrized positive-definite form (iterations
    = solves); large ones run Lanczos at the opposite spectral edge of the
    shifted operator (iterations = matrix products).  Either way the
    Rayleigh residual must drop below ``tol`` relative to the operator's
    norm (Gershgorin bound), and the eigenvector comes back sign-normalized
    and unit-normalized in the operator's measure.
    """
    m = op.n_states
    if which == "L":
        A = sp.identity(m, format="csr") - op.symmetrized()
        back = 1.0 / op.sym_factor()
        norm_weights = op.mu_r
    elif which == "script_L":
        if op.beta is None:
            raise ValidationError("script_L needs an operator built with a beta field")
        tau = op.r ** op.beta.values[op.inside]
        dens = tau * op.mu_r  # unnormalized nu density: eigenvalues unaffected
        s = np.sqrt(dens)
        core = sp.diags(op.mu_r) @ (sp.identity(m, format="csr") - op.P_B)
        A = sp.diags(1.0 / s) @ core @ sp.diags(1.0 / s)
        back = 1.0 / s
        norm_weights = dens
    else:
        raise ValidationError(f"unknown generator choice {which!r}")
    A = ((A + A.T) * 0.5).tocsr()  # symmetrize away roundoff
    gersh = float(np.asarray(abs(A).sum(axis=1)).max())  # cheap norm bound
    scale = max(1.0, gersh)
    if m <= _DENSE_EIG_CUTOFF:
        vals, vecs = scipy.linalg.eigh(A.toarray())
        lam, v, it = float(vals[0]), vecs[:, 0], 0
        res = float(np.linalg.norm(A @ v - lam * v))
    elif m <= _LANCZOS_CUTOFF:
        lam, v, it, res = _inverse_iteration(A, tol * scale, max_iter)
    else:
        lam, v, it, res = _edge_lanczos(A, gersh, tol, max_iter)
    if res > tol * scale:
        raise ConvergenceFailureError(
            f"eigen solve stuck at relative residual {res / scale:.3e} "
            f"(tolerance {tol:.0e})")
    if v.sum() < 0:
        v = -v
    f = back * v
    f /= np.sqrt(float((f * f * norm_weights).sum()))  # unit mass in the measure
    return SpectralReport(lambda_1=lam, eigvec=f, iterations=it,
                          residual=res, which=which, n_states=m)


def _inverse_iteration(A: sp.csr_matrix, tol: float, max_iter: int):
    m = A.shape[0]
    try:
        lu = splu(A.tocsc())
    except RuntimeError as exc:
        raise NumericalError(f"killed generator is singular: {exc}") from exc
    v = np.full(m, 1.0 / np.sqrt(m))
    for it in range(1, max_iter + 1):
        x = lu.solve(v)
        nrm = np.linalg.norm(x)
        if nrm == 0.0 or not np.isfinite(nrm):
            raise NumericalError("inverse power iteration collapsed")
        v = x / nrm
        Av = A @ v
        lam = float(v @ Av)
        res = float(np.linalg.norm(Av - lam * v))
        if res <= tol:
            return lam, v, it, res
    return lam, v, max_iter, res


def _edge_lanczos(A: sp.csr_matrix, shift: float, tol: float, max_iter: int):
    # smallest eigenvalue of A = largest of shift*I - A; Lanczos converges
    # quickly at that edge and needs no factorization
    m = A.shape[0]
    count = {"n": 0}

    def matvec(x):
        count["n"] += 1
        return shift * x - A @ x

    operator = LinearOperator((m, m), matvec=matvec, dtype=float)
    v0 = np.full(m, 1.0 / np.sqrt(m))
    try:
        vals, vecs = eigsh(operator, k=1, which="LA", v0=v0, tol=tol * 1e-2,
                           maxiter=max_iter)
    except Exception as exc:  # ARPACK failure
        raise ConvergenceFailureError(f"Lanczos eigen solve failed: {exc}") from exc
    v = vecs[:, 0]
    lam = float(shift - vals[0])
    res = float(np.linalg.norm(A @ v - lam * v))
    return lam, v, count["n"], res


@dataclass
class FaberKrahnSweep:
    """lambda_1(B_R) against R, with the scale-free products lambda_1 * R**beta."""

    x0: int
    r: float
    radii: np.ndarray
    lambdas: np.ndarray
    products: np.ndarray
    empirical_c: float

    def rows(self):
        return list(zip(self.radii, self.lambdas, self.products))


def faber_krahn_sweep(cloud: PointCloud, mu: MeasureWeights, beta: BetaField, x0: int,
                      R_grid, r: float, check_connected: bool = True) -> FaberKrahnSweep:
    """Bottom eigenvalue of the renormalized generator across ball radii.

    The products lambda_1 * R**beta(x0) should stay bounded away from zero;
    their minimum is the empirical constant of the lower bound
    lambda_1 >= c / R**beta(x0).
    """
    R_grid = np.asarray(R_grid, dtype=float)
    if R_grid.size == 0 or np.any(R_grid <= 0):
        raise ValidationError("need positive ball radii")
    if not (r <= R_grid.min() / 4.0):
        raise ValidationError(
            f"step scale r={r} must be at most the smallest radius / 4")
    lams = np.empty(R_grid.size)
    for k, R in enumerate(R_grid):
        op = build_killed_operator(cloud, mu, r, BallSpec(center_index=x0, radius=float(R)),
                                   beta=beta, check_connected=check_connected and k == 0)
        lams[k] = bottom_eigenvalue(op, which="script_L").lambda_1
    products = lams * R_grid ** beta.values[x0]
    return FaberKrahnSweep(x0=int(x0), r=float(r), radii=R_grid, lambdas=lams,
                           products=products, empirical_c=float(products.min()))


@dataclass
class BetaLowerBoundCheck:
    """Tent-function Rayleigh quotients across step scales.

    ``implied_exponent`` is the slope of log(1/RQ) against log(1/r); on a
    regular space it approaches 2 minus the spread of the local dimension.
    """

    x0: int
    R: float
    scales: np.ndarray
    sigmas: np.ndarray
    sup_exits: np.ndarray
    rayleighs: np.ndarray
    implied_exponent: float
    alpha_spread: float
    sigma_bounds_hold: bool
    rayleigh_dominates: bool


def beta_lower_bound_check(cloud: PointCloud, mu: MeasureWeights, report, x0: int,
                           R: float, r_grid, check_connected: bool = True) -> BetaLowerBoundCheck:
    """Certify the walk exponent from below with tent test functions.

    Requires a passing regularity report (its Q values give the dimension
    spread).  For each step scale r the tent psi(y) = (R - d(x0, y)) / r
    is fed to the Rayleigh quotient of I - P_B; the bottom eigenvalue
    sigma_r can only sit below it, and sigma_r * sup E >= 1 exactly, so
    log(1/RQ) against log(1/r) bounds the exponent from below.
    """
    if not getattr(report, "passed", False):
        raise ValidationError("regularity report did not pass; the bound does not apply")
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid <= 0) or np.any(np.diff(r_grid) >= 0):
        raise ValidationError("scales must be positive and strictly decreasing")
    if r_grid[0] > R / 4.0:
        raise ValidationError("largest scale exceeds R / 4")
    ball = BallSpec(center_index=x0, radius=float(R))
    sigmas = np.empty(r_grid.size)
    sups = np.empty(r_grid.size)
    rqs = np.empty(r_grid.size)
    for k, r in enumerate(r_grid):
        op = build_killed_operator(cloud, mu, float(r), ball,
                                   check_connected=check_connected and k == 0)
        sigmas[k] = bottom_eigenvalue(op, which="L").lambda_1
        sups[k] = exit_time_measure(cloud, mu, float(r), ball).sup_value
        d = np.sqrt(squared_dist(cloud.coords[op.inside], cloud.coords[x0]))
        psi = (R - d) / r
        core = sp.diags(op.mu_r) @ (sp.identity(op.n_states, format="csr") - op.P_B)
        num = float(psi @ (core @ psi))
        den = float(psi @ (op.mu_r * psi))
        rqs[k] = num / den
    fit_x = -np.log(r_grid)
    fit_y = -np.log(rqs)
    slope = float(np.polyfit(fit_x, fit_y, 1)[0])
    Q = np.asarray(report.Q, dtype=float)
    return BetaLowerBoundCheck(
        x0=int(x0), R=float(R), scales=r_grid, sigmas=sigmas, sup_exits=sups,
        rayleighs=rqs, implied_exponent=slope, alpha_spread=float(Q.max() - Q.min()),
        sigma_bounds_hold=bool(np.all(sigmas * sups >= 1.0 - 1e-8)),
        rayleigh_dominates=bool(np.all(sigmas <= rqs + 1e-12)),
    )
