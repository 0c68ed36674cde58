"""Figure rendering for report outputs.

Every figure goes to a file (Agg backend, no display) next to the
delimited output it illustrates.  PNG metadata is stripped so identical
runs produce byte-identical images.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SAVEFIG_KW = dict(dpi=150, bbox_inches="tight", metadata={"Software": None})


def save_cloud_figure(cloud, path, color_by_param: bool = True, title: str | None = None):
    fig, ax = plt.subplots(figsize=(6, 6))
    pts = cloud.coords
    kw = dict(c=cloud.params, cmap="viridis") if color_by_param else {}
    if cloud.ambient_dim == 1:
        ax.scatter(pts[:, 0], np.zeros(len(cloud)), s=2, **kw)
        ax.set_ylim(-1, 1)
    else:
        sc = ax.scatter(pts[:, 0], pts[:, 1], s=1.5, **kw)
        if color_by_param:
            fig.colorbar(sc, ax=ax, label="param")
        ax.set_aspect("equal")
    ax.set_title(title or cloud.label)
    fig.savefig(path, **SAVEFIG_KW)
    plt.close(fig)


def save_scaling_figure(fit, path, title: str = "", xlabel: str = "scale"):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(fit.scales, fit.sup_values, "o", label="data")
    line = np.exp(fit.intercept) * fit.scales ** (
        fit.exponent if xlabel == "scale" else -fit.exponent)
    ax.loglog(fit.scales, line, "-",
              label=f"slope {fit.exponent:.3f} (R^2 {fit.r_squared:.4f})")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("value")
    ax.legend()
    if title:
        ax.set_title(title)
    fig.savefig(path, **SAVEFIG_KW)
    plt.close(fig)


def save_field_figure(cloud, values, path, title: str = "exit time"):
    fig, ax = plt.subplots(figsize=(6, 5))
    pts = cloud.coords
    if cloud.ambient_dim == 1:
        ax.plot(pts[:, 0], values, ".", ms=3)
        ax.set_xlabel("x")
        ax.set_ylabel("value")
    else:
        sc = ax.scatter(pts[:, 0], pts[:, 1], s=2, c=values, cmap="magma")
        fig.colorbar(sc, ax=ax)
        ax.set_aspect("equal")
    ax.set_title(title)
    fig.savefig(path, **SAVEFIG_KW)
    plt.close(fig)


def save_sweep_figure(radii, lambdas, products, path, exponent_label: str = "beta"):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.loglog(radii, lambdas, "o-")
    ax1.set_xlabel("R")
    ax1.set_ylabel("lambda_1")
    ax2.semilogx(radii, products, "s-")
    ax2.set_xlabel("R")
    ax2.set_ylabel(f"lambda_1 * R**{exponent_label}")
    fig.tight_layout()
    fig.savefig(path, **SAVEFIG_KW)
    plt.close(fig)
