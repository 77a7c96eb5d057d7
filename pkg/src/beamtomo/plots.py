"""Report figures rendered straight to files (headless backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def boundary_trace_figure(records, path, max_traces: int = 6) -> str:
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    step = max(1, len(records) // max_traces)
    for rec in records[::step][:max_traces]:
        ax.plot(rec.theta_b, rec.absU, lw=0.8,
                label=f"src ({rec.source.theta_index},{rec.source.dir_index})")
    ax.set_xlabel("boundary angle")
    ax.set_ylabel("|u|")
    ax.legend(fontsize=7, loc="upper right")
    ax.set_title("phaseless boundary traces")
    return _save(fig, path)


def sinogram_figure(sino, path, title: str = "flow-transform values") -> str:
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    ax.plot(np.asarray(sino.values), lw=0.9)
    ax.set_xlabel("ray index (source-major)")
    ax.set_ylabel("integral value")
    ax.set_title(title)
    return _save(fig, path)


def grid_figure(grid, path, title: str = "", truth=None) -> str:
    ncol = 2 if truth is not None else 1
    fig, axes = plt.subplots(1, ncol, figsize=(4.2 * ncol, 3.8))
    axes = np.atleast_1d(axes)
    ext = [grid.ox - grid.h / 2, grid.ox + grid.h * (grid.nx - 0.5),
           grid.oy - grid.h / 2, grid.oy + grid.h * (grid.ny - 0.5)]
    shown = np.where(grid.mask, grid.values, np.nan)
    im = axes[0].imshow(shown, origin="lower", extent=ext)
    axes[0].set_title(title or "estimate")
    fig.colorbar(im, ax=axes[0], shrink=0.85)
    if truth is not None:
        tshown = np.where(grid.mask, truth.values, np.nan)
        im2 = axes[1].imshow(tshown, origin="lower", extent=ext)
        axes[1].set_title("truth")
        fig.colorbar(im2, ax=axes[1], shrink=0.85)
    return _save(fig, path)


def residual_scan_figure(scan, path) -> str:
    fig, ax = plt.subplots(figsize=(4.6, 3.6))
    ax.loglog(scan.lambdas, scan.residuals, "o-", label="measured")
    anchor = scan.residuals[0] * (scan.lambdas / scan.lambdas[0]) ** (-1.0)
    ax.loglog(scan.lambdas, anchor, "k--", lw=0.8, label="slope -1")
    ax.set_xlabel("wavenumber")
    ax.set_ylabel("relative residual")
    ax.legend(fontsize=8)
    ax.set_title(f"fitted slope {scan.slope:.3f}")
    return _save(fig, path)


def sweep_figure(rows, path) -> str:
    """Reconstruction error vs lambda, one line per (eps, noise)."""
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    combos = sorted({(r["eps"], r["noise"]) for r in rows if r.get("ok")})
    for eps, noise in combos:
        pts = sorted((r["lam"], r["rel_l2"]) for r in rows
                     if r.get("ok") and r["eps"] == eps and r["noise"] == noise)
        if pts:
            lam, err = zip(*pts)
            ax.loglog(lam, err, "o-", lw=0.9,
                      label=f"eps={eps:g}, noise={noise:g}")
    ax.set_xlabel("wavenumber")
    ax.set_ylabel("relative L2 error")
    if combos:
        ax.legend(fontsize=7)
    ax.set_title("stability sweep")
    return _save(fig, path)


def ray_fan_figure(rays, dom, path, max_rays: int = 80) -> str:
    fig, ax = plt.subplots(figsize=(4.4, 4.4))
    _, nodes, _ = dom.boundary_nodes()
    ax.plot(np.append(nodes[:, 0], nodes[0, 0]),
            np.append(nodes[:, 1], nodes[0, 1]), "k-", lw=1.0)
    step = max(1, len(rays) // max_rays)
    for ray in rays[::step]:
        ax.plot(ray.x[:, 0], ray.x[:, 1], lw=0.5, alpha=0.7)
    ax.set_aspect("equal")
    ax.set_title("traced fan")
    return _save(fig, path)
