"""Command line front end.

Subcommands mirror the library: generate clouds, build nets and walk
graphs, solve exit times, fit exponents, check Ahlfors regularity, run the
spectral analyses, execute JSON-configured pipelines and reproduce the
report tables.  Angles are taken in degrees on the command line.  Exit
codes: 0 on success, 2 on a validation error, 3 on a numerical failure.
"""
from __future__ import annotations

import dataclasses
import functools
import sys
from pathlib import Path

import click
import numpy as np
from threadpoolctl import threadpool_limits

from .errors import NumericalError, ValidationError


def _handled(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected a comma-separated float list, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected a comma-separated integer list, got {text!r}")


def _load_cloud(path):
    from .geometry import PointCloud

    return PointCloud.from_csv(path)


def _load_measure(cloud, weights_path):
    from .geometry import MeasureWeights

    if weights_path is None:
        return MeasureWeights.uniform(len(cloud))
    return MeasureWeights.from_csv(weights_path)


def _grid(top, count, ratio, values):
    from .exponents import default_scale_grid

    if values is not None:
        return np.asarray(_floats(values), dtype=float)
    if top is None:
        raise ValidationError("need --top/--count or --scales")
    if ratio is None:
        return default_scale_grid(top, count)
    return default_scale_grid(top, count, ratio)


@click.group()
@click.option("--threads", type=int, default=None,
              help="Cap BLAS/OpenMP thread pools for the whole command.")
@click.pass_context
def main(ctx, threads):
    """Local dimension and walk exponents on finite metric samples."""
    if threads is not None:
        ctx.with_resource(threadpool_limits(limits=threads))


@main.command()
@click.option("--family", required=True,
              type=click.Choice(["koch", "gasket", "carpet", "vicsek",
                                 "interval", "disk", "square"]))
@click.option("--stage", type=int, default=None, help="Fractal construction stage.")
@click.option("--theta1", type=float, default=None, help="Koch start angle, degrees.")
@click.option("--theta2", type=float, default=None, help="Koch end angle, degrees.")
@click.option("--r1", type=float, default=None, help="Start contraction ratio/fraction.")
@click.option("--r2", type=float, default=None, help="End contraction ratio/fraction.")
@click.option("--side", type=float, default=None, help="Gasket side length.")
@click.option("--resolution", type=int, default=None, help="Grid points per axis.")
@click.option("--half-width", type=float, default=None, help="Euclidean half width.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_handled
def generate(family, stage, theta1, theta2, r1, r2, side, resolution, half_width, out):
    """Write a point cloud CSV for a fractal stage or Euclidean grid."""
    from .pipeline import SpaceConfig

    cloud = SpaceConfig(family=family, resolution=resolution, half_width=half_width,
                        stage=stage, theta1_deg=theta1, theta2_deg=theta2,
                        r1=r1, r2=r2, side=side).build()
    cloud.to_csv(out)
    click.echo(f"{out}: {len(cloud)} points in R^{cloud.ambient_dim}")


@main.command()
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--epsilon", required=True, type=float)
@click.option("--seed", type=int, default=0, help="Scan-order seed index for the net.")
@click.option("--kind", type=click.Choice(["covering", "proximity"]), default="covering")
@click.option("--eta", type=float, default=1.0)
@click.option("--rho", type=float, default=2.0)
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Edge list CSV; membership lands beside it as *.members.csv.")
@_handled
def net(cloud_path, epsilon, seed, kind, eta, rho, out):
    """Build a greedy epsilon-net and its walk graph."""
    from .nets import (build_epsilon_net, build_walk_graph,
                       save_net_membership_csv, save_walk_graph_csv)

    cloud = _load_cloud(cloud_path)
    enet = build_epsilon_net(cloud, epsilon, seed_index=seed)
    graph = build_walk_graph(cloud, enet, kind=kind,
                             param=eta if kind == "covering" else rho)
    save_walk_graph_csv(graph, out)
    members = Path(out).with_suffix(".members.csv")
    save_net_membership_csv(enet, members)
    click.echo(f"{out}: {len(graph)} net points, "
               f"{sum(len(a) for a in graph.adjacency) // 2} edges; {members}")


@main.command("exit-times")
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--center", required=True, type=int, help="Ball center cloud index.")
@click.option("--radius", required=True, type=float)
@click.option("--open", "open_ball", is_flag=True, help="Use an open exit ball.")
@click.option("--mode", type=click.Choice(["measure", "graph"]), default="measure")
@click.option("--r", "scale", type=float, default=None, help="Jump radius (measure mode).")
@click.option("--epsilon", type=float, default=None, help="Net scale (graph mode).")
@click.option("--seed", type=int, default=0)
@click.option("--kind", type=click.Choice(["covering", "proximity"]), default="covering")
@click.option("--eta", type=float, default=1.0)
@click.option("--rho", type=float, default=2.0)
@click.option("--beta-const", type=float, default=None,
              help="Also solve the renormalized field with this constant exponent.")
@click.option("--tol", type=float, default=1e-10)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_handled
def exit_times(cloud_path, weights_path, center, radius, open_ball, mode, scale,
               epsilon, seed, kind, eta, rho, beta_const, tol, out):
    """Solve expected exit times from a ball and write the field."""
    from .geometry import BallSpec
    from .nets import build_epsilon_net, build_walk_graph
    from .pipeline import _field_csv, _field_meta
    from .util import canonical_json, write_text_atomic
    from .walks import (BetaField, exit_time_graph, exit_time_measure,
                        exit_time_renormalized)

    cloud = _load_cloud(cloud_path)
    ball = BallSpec(center, radius, closed=not open_ball)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    if mode == "graph":
        if epsilon is None:
            raise ValidationError("graph mode needs --epsilon")
        enet = build_epsilon_net(cloud, epsilon, seed_index=seed)
        graph = build_walk_graph(cloud, enet, kind=kind,
                                 param=eta if kind == "covering" else rho)
        ef = exit_time_graph(graph, cloud, ball, tol=tol)
        meta_seed = seed
    else:
        if scale is None:
            raise ValidationError("measure mode needs --r")
        mu = _load_measure(cloud, weights_path)
        ef = exit_time_measure(cloud, mu, scale, ball, tol=tol)
        meta_seed = None
    write_text_atomic(outdir / "exit_times.csv", _field_csv(ef.values, ef.inside))
    write_text_atomic(outdir / "exit_times.json",
                      canonical_json(_field_meta(ef, meta_seed)) + "\n")
    click.echo(f"{outdir}/exit_times.csv: sup={ef.sup_value!r} "
               f"residual={ef.solver_residual:.3e}")
    if beta_const is not None:
        if mode == "graph":
            raise ValidationError("renormalization applies to measure mode only")
        beta = BetaField.constant(len(cloud), beta_const)
        phi = exit_time_renormalized(cloud, mu, scale, ball, beta, tol=tol)
        write_text_atomic(outdir / "renormalized.csv", _field_csv(phi.values, phi.inside))
        write_text_atomic(outdir / "renormalized.json",
                          canonical_json(_field_meta(phi, None)) + "\n")
        click.echo(f"{outdir}/renormalized.csv: sup={phi.sup_value!r}")


@main.command()
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--points", required=True, help="Comma-separated cloud indices.")
@click.option("--top", type=float, default=None, help="Largest scale of the grid.")
@click.option("--count", type=int, default=8)
@click.option("--ratio", type=float, default=None)
@click.option("--scales", default=None, help="Explicit comma-separated scales.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_handled
def alpha(cloud_path, weights_path, points, top, count, ratio, scales, out):
    """Fit the local volume growth exponent at sample points."""
    from .exponents import estimate_alpha_local
    from .pipeline import _point_csv
    from .util import canonical_json, write_text_atomic

    cloud = _load_cloud(cloud_path)
    mu = _load_measure(cloud, weights_path)
    grid = _grid(top, count, ratio, scales)
    fits = {x: estimate_alpha_local(cloud, mu, x, grid) for x in _ints(points)}
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_text_atomic(outdir / "alpha.csv", _point_csv(
        [(x, f.exponent, float(grid.max())) for x, f in fits.items()]))
    write_text_atomic(outdir / "alpha.json", canonical_json(
        {str(x): f.to_dict() for x, f in fits.items()}) + "\n")
    for x, f in fits.items():
        click.echo(f"alpha({x}) = {f.exponent:.4f}  (R^2 {f.r_squared:.4f})")


@main.command()
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--center", required=True, type=int)
@click.option("--radius", required=True, type=float)
@click.option("--mode", type=click.Choice(["measure", "graph"]), default="measure")
@click.option("--top", type=float, default=None)
@click.option("--count", type=int, default=6)
@click.option("--ratio", type=float, default=None)
@click.option("--scales", default=None)
@click.option("--kind", type=click.Choice(["covering", "proximity"]), default="covering")
@click.option("--eta", type=float, default=1.0)
@click.option("--rho", type=float, default=2.0)
@click.option("--net-seeds", default="0", help="Net seed indices for the envelope.")
@click.option("--envelope", type=click.Choice(["upper", "lower"]), default="upper")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_handled
def beta(cloud_path, weights_path, center, radius, mode, top, count, ratio, scales,
         kind, eta, rho, net_seeds, envelope, out):
    """Fit the walk exponent from sup exit counts across scales."""
    from .exponents import estimate_beta_ball
    from .geometry import BallSpec
    from .pipeline import _point_csv
    from .util import canonical_json, write_text_atomic

    cloud = _load_cloud(cloud_path)
    ball = BallSpec(center, radius)
    grid = _grid(top, count, ratio, scales)
    if mode == "measure":
        fit = estimate_beta_ball(cloud, ball, "measure", grid, envelope=envelope,
                                 mu=_load_measure(cloud, weights_path))
    else:
        fit = estimate_beta_ball(cloud, ball, "graph", grid, envelope=envelope,
                                 graph_kind=kind,
                                 graph_param=eta if kind == "covering" else rho,
                                 net_seeds=tuple(_ints(net_seeds)))
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_text_atomic(outdir / "beta.csv", _point_csv([(center, fit.exponent, radius)]))
    write_text_atomic(outdir / "beta.json", canonical_json(fit.to_dict()) + "\n")
    click.echo(f"beta = {fit.exponent:.4f}  (R^2 {fit.r_squared:.4f})")


@main.command()
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--points", required=True, help="Comma-separated sample indices.")
@click.option("--rmin", required=True, type=float)
@click.option("--rmax", required=True, type=float)
@click.option("--threshold", type=float, default=50.0)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_handled
def ahlfors(cloud_path, weights_path, points, rmin, rmax, threshold, out):
    """Check variable Ahlfors regularity of the measure."""
    from .exponents import fit_ahlfors
    from .util import canonical_json, write_text_atomic

    cloud = _load_cloud(cloud_path)
    mu = _load_measure(cloud, weights_path)
    rep = fit_ahlfors(cloud, mu, (rmin, rmax), _ints(points), threshold=threshold)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_text_atomic(outdir / "ahlfors.json", canonical_json(rep.to_dict()) + "\n")
    click.echo(f"C = {rep.C:.4g}  log-Holder C = {rep.log_holder_C:.4g}  "
               f"{'PASS' if rep.passed else 'FAIL'}")


@main.command()
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--center", required=True, type=int)
@click.option("--radius", required=True, type=float)
@click.option("--r", "scale", required=True, type=float, help="Jump radius.")
@click.option("--beta-const", type=float, default=None,
              help="Analyze the renormalized generator with this exponent.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_handled
def spectral(cloud_path, weights_path, center, radius, scale, beta_const, out):
    """Bottom eigenvalue and spectral radius of the killed walk operator."""
    from .geometry import BallSpec
    from .spectral import bottom_eigenvalue, build_killed_operator, spectral_radius_bound
    from .util import canonical_json, write_text_atomic
    from .walks import BetaField

    cloud = _load_cloud(cloud_path)
    mu = _load_measure(cloud, weights_path)
    beta = None if beta_const is None else BetaField.constant(len(cloud), beta_const)
    op = build_killed_operator(cloud, mu, scale, BallSpec(center, radius), beta=beta)
    rho, _ = spectral_radius_bound(op)
    rep = bottom_eigenvalue(op, which="L" if beta is None else "script_L")
    doc = rep.to_dict()
    doc["spectral_radius_bound"] = rho
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_text_atomic(outdir / "spectral.json", canonical_json(doc) + "\n")
    click.echo(f"lambda_1 = {rep.lambda_1!r}  rho = {rho:.6f}  "
               f"({rep.n_states} states)")


@main.command("faber-krahn")
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--x0", required=True, type=int)
@click.option("--radii", required=True, help="Comma-separated ball radii R.")
@click.option("--r", "scale", required=True, type=float, help="Jump radius.")
@click.option("--beta-const", required=True, type=float)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_handled
def faber_krahn(cloud_path, weights_path, x0, radii, scale, beta_const, out):
    """Sweep lambda_1(B_R) over R and report the products lambda_1 * R^beta."""
    from .spectral import faber_krahn_sweep
    from .util import canonical_json, fmt_float, write_text_atomic
    from .walks import BetaField

    cloud = _load_cloud(cloud_path)
    mu = _load_measure(cloud, weights_path)
    beta = BetaField.constant(len(cloud), beta_const)
    sweep = faber_krahn_sweep(cloud, mu, beta, x0,
                              np.asarray(_floats(radii)), scale)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["R,lambda1,product"]
    for R, lam, prod in sweep.rows():
        lines.append(f"{fmt_float(R)},{fmt_float(lam)},{fmt_float(prod)}")
    write_text_atomic(outdir / "faber_krahn.csv", "\n".join(lines) + "\n")
    write_text_atomic(outdir / "faber_krahn.json", canonical_json(
        {"x0": sweep.x0, "r": sweep.r, "empirical_c": sweep.empirical_c}) + "\n")
    click.echo(f"empirical c = {sweep.empirical_c!r}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Override the config's output directory.")
@click.option("--seed", type=int, default=None, help="Override the config's seed.")
@_handled
def run(config_path, out, seed):
    """Execute a JSON pipeline config; cache hits are served byte-identically."""
    from .pipeline import ExperimentConfig, run_pipeline

    config = ExperimentConfig.load(config_path)
    if out is not None:
        config = dataclasses.replace(config, output_dir=out)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    manifest = run_pipeline(config)
    for step in manifest.steps:
        tag = "cached" if step.cached else f"{step.seconds:.2f}s"
        click.echo(f"{step.stage}: {tag}  ({len(step.outputs)} files)")
    click.echo(f"manifest: {Path(config.output_dir) / 'manifest.json'}")


@main.command("reproduce-paper")
@click.option("--preset", type=click.Choice(["euclid", "koch", "gasket",
                                             "spectral", "all"]), default="all")
@click.option("--out", type=click.Path(file_okay=False), default="report")
@click.option("--seed", type=int, default=None,
              help="Master seed for the randomized rows (default: the frozen one).")
@_handled
def reproduce_paper_cmd(preset, out, seed):
    """Re-run the acceptance experiments and write pass/fail report tables."""
    from .pipeline import _PRESETS, reproduce_paper

    names = sorted(_PRESETS) if preset == "all" else [preset]
    ok = True
    for name in names:
        target = Path(out) / name if preset == "all" else Path(out)
        rows = reproduce_paper(name, target, seed=seed)
        for r in rows:
            status = "pass" if r.passed else "FAIL"
            click.echo(f"[{status}] {name}: criterion {r.criterion} {r.quantity} "
                       f"= {r.measured:.6g} (target {r.target:.6g}, {r.tolerance})")
        ok = ok and all(r.passed for r in rows)
    click.echo("all criteria passed" if ok else "SOME CRITERIA FAILED")
