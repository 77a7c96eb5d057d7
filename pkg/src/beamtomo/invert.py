"""Recover n^2 differences from paired phaseless boundary datasets.

Extraction inverts the beam-amplitude law log p = -alpha*I - R per ray,
where I is the flow transform of n^2 and R the accumulated Re tr M.
Because the perturbed medium also shifts the exit time, the raw peak
log-ratio only sees about half of the n^2 difference; the stored exit
times and exit Re tr M supply an explicit first-order correction
(constant-difference media are then recovered exactly).

The linear solve runs conjugate residuals on the Tikhonov normal
equations A^T A + lam G^T G restricted to in-mask pixels, with lam set
relative to a power-iteration estimate of ||A^T A||.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation, ExtractionError, SolverError
from .fields import Medium, ScalarField
from .measure import Dataset, _check_compatible
from .rays import RayPath, TraceOptions, trace_fan
from .transform import EnergyConvention, PixelGrid, Sinogram, build_system


@dataclass
class ExtractionResult:
    sinogram: Sinogram
    diagnostics: list
    flagged: np.ndarray    # (n_rays,) bool, True where the value is unusable


@dataclass
class Reconstruction:
    grid: PixelGrid
    residual_history: np.ndarray
    reg_lambda: float
    iterations: int
    flagged_rows: int = 0


def extract_ray_integrals(ref: Dataset, meas: Dataset) -> ExtractionResult:
    """Per-ray flow-transform values of n^2_meas - n^2_ref.

    value = -log(peak_meas / peak_ref)/alpha - (tau_meas - tau_ref)*(1 + R'/alpha)
    with R' the reference exit Re tr M.  Rays with degenerate or
    non-positive peaks are flagged; more than half flagged is an error.
    """
    _check_compatible(ref, meas)
    alpha = float(ref.config["alpha"])
    if alpha <= 0:
        raise ExtractionError("extraction needs alpha > 0")
    n = len(ref.records)
    values = np.zeros(n)
    taus = np.zeros(n)
    flagged = np.zeros(n, dtype=bool)
    diagnostics = []
    for i, (r1, r2) in enumerate(zip(ref.records, meas.records)):
        taus[i] = r1.tau
        p1, p2 = r1.peak_fitted, r2.peak_fitted
        bad = (r1.flags.get("degenerate") or r2.flags.get("degenerate")
               or not np.isfinite(p1) or not np.isfinite(p2)
               or p1 <= 0 or p2 <= 0)
        diag = {"ratio": np.nan, "raw": np.nan, "tau_ref": r1.tau,
                "tau_meas": r2.tau, "retr_exit": r1.retr_exit,
                "correction": np.nan}
        if bad:
            flagged[i] = True
            diagnostics.append(diag)
            continue
        ratio = p2 / p1
        raw = -np.log(ratio) / alpha
        correction = (r2.tau - r1.tau) * (1.0 + r1.retr_exit / alpha)
        value = raw - correction
        diag.update(ratio=ratio, raw=raw, correction=correction)
        if not np.isfinite(value):
            flagged[i] = True
        else:
            values[i] = value
        diagnostics.append(diag)
    if np.count_nonzero(flagged) > 0.5 * n:
        raise ExtractionError(
            f"{np.count_nonzero(flagged)} of {n} rays unusable")
    fan = [r.source for r in ref.records]
    sino = Sinogram(fan=fan, values=values, taus=taus,
                    convention=EnergyConvention(form="beam"))
    return ExtractionResult(sinogram=sino, diagnostics=diagnostics,
                            flagged=flagged)


def _masked_gradient(grid: PixelGrid) -> sp.csr_matrix:
    """First differences between horizontally/vertically adjacent
    in-mask pixels, in units of 1/h."""
    ny, nx, h = grid.ny, grid.nx, grid.h
    m = grid.mask
    idx = np.arange(ny * nx).reshape(ny, nx)
    rows, cols, vals = [], [], []
    row = 0
    for (a, b) in [(idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])]:
        pair_ok = m.ravel()[a.ravel()] & m.ravel()[b.ravel()]
        aa, bb = a.ravel()[pair_ok], b.ravel()[pair_ok]
        k = aa.size
        rows.extend([np.arange(row, row + k)] * 2)
        cols.extend([aa, bb])
        vals.extend([np.full(k, -1.0 / h), np.full(k, 1.0 / h)])
        row += k
    G = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(row, ny * nx))
    return G.tocsr()


def _norm_estimate(N: sp.spmatrix, seed: int = 0, iters: int = 50) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(N.shape[1])
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iters):
        w = N @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 1.0
        v = w / lam
    return lam


def solve_linear(sino: Sinogram, medium: Medium, grid: PixelGrid,
                 reg_lambda_rel: float = 1e-6, max_iter: int = 500,
                 tol: float = 1e-8,
                 rays: list[RayPath] | None = None,
                 flagged: np.ndarray | None = None,
                 opts: TraceOptions | None = None) -> Reconstruction:
    """Conjugate-residual solve of (A^T A + lam G^T G) f = A^T y on the
    in-mask pixels; the returned grid is zero outside the mask."""
    if rays is None:
        rays = trace_fan(sino.fan, medium, opts)
    A = build_system(rays, grid, sino.convention)
    y = np.asarray(sino.values, dtype=float)
    keep_rows = np.ones(len(rays), dtype=bool)
    if flagged is not None:
        keep_rows &= ~np.asarray(flagged, dtype=bool)
    A = A[keep_rows]
    y = y[keep_rows]

    mvec = grid.mask.ravel()
    Am = A[:, mvec].tocsr()
    G = _masked_gradient(grid)[:, mvec].tocsr()
    AtA = (Am.T @ Am).tocsr()
    reg_lambda = reg_lambda_rel * _norm_estimate(AtA)
    N = (AtA + reg_lambda * (G.T @ G)).tocsr()
    b = Am.T @ y

    x = np.zeros(N.shape[0])
    r = b.copy()
    bnorm = float(np.linalg.norm(b))
    history = [1.0 if bnorm > 0 else 0.0]
    iterations = 0
    if bnorm > 0:
        p = r.copy()
        Nr = N @ r
        Np = Nr.copy()
        rNr = float(r @ Nr)
        worse = 0
        for k in range(max_iter):
            denom = float(Np @ Np)
            if denom <= 0 or rNr <= 0:
                break
            a = rNr / denom
            x += a * p
            r -= a * Np
            rel = float(np.linalg.norm(r)) / bnorm
            history.append(rel)
            iterations = k + 1
            if rel <= tol:
                break
            worse = worse + 1 if rel > history[-2] else 0
            if worse >= 10:
                raise SolverError("residual diverged", history=history)
            Nr = N @ r
            rNr_new = float(r @ Nr)
            beta = rNr_new / rNr
            rNr = rNr_new
            p = r + beta * p
            Np = Nr + beta * Np

    vals = np.zeros(grid.ny * grid.nx)
    vals[mvec] = x
    out = grid.copy_with(vals.reshape(grid.ny, grid.nx))
    return Reconstruction(grid=out, residual_history=np.array(history),
                          reg_lambda=float(reg_lambda),
                          iterations=iterations,
                          flagged_rows=int(np.count_nonzero(~keep_rows)))


def l2_error(recon: PixelGrid, truth, relative: bool = True) -> float:
    """Masked L2 distance between a reconstruction and the true field
    (ScalarField or PixelGrid), relative to the truth norm by default."""
    if isinstance(truth, ScalarField):
        tvals = truth.jet(recon.centers(), order=0).value
    elif isinstance(truth, PixelGrid):
        tvals = truth.values
    else:
        tvals = np.asarray(truth, dtype=float)
    if tvals.shape != recon.values.shape:
        raise ContractViolation("truth grid shape mismatch")
    m = recon.mask
    diff = np.linalg.norm((recon.values - tvals)[m])
    if not relative:
        return float(recon.h * diff)
    tnorm = np.linalg.norm(tvals[m])
    if tnorm == 0.0:
        raise ContractViolation("truth is zero on the mask")
    return float(diff / tnorm)
