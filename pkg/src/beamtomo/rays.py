"""Hamiltonian ray tracing: dx/ds = dH/dp, dp/ds = -dH/dx for
H = |p|^2_g - n^2(x), integrated with fixed-step RK4 until the ray
crosses the domain boundary, then bisection-refined to |rho| < tol.

Whole fans are marched as one batch: the right-hand side is vectorized
over rays, exited rays are frozen, and the exit crossings of all rays
are bisected simultaneously at the end.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationError, TrappedRayError
from .fields import Medium
from .geometry import SourceDirection

__all__ = ["SourceDirection", "TraceOptions", "RayPath", "hamiltonian",
           "hamiltonian_rhs", "trace", "trace_fan", "exit_time_table"]


@dataclass
class TraceOptions:
    h: float = 1e-3                 # fixed RK4 step in the flow parameter
    rho_tol: float = 1e-10          # exit refinement target on |rho|
    max_span_factor: float = 50.0   # trapping guard: s_max = factor * diam
    energy_flag_tol: float = 1e-8
    energy_fail_tol: float = 1e-6


@dataclass
class RayPath:
    """Discretized H-geodesic: uniform s grid plus the refined exit sample."""

    s: np.ndarray                   # (K,)
    x: np.ndarray                   # (K, 2)
    p: np.ndarray                   # (K, 2)
    tau: float
    exit_point: np.ndarray
    exit_momentum: np.ndarray
    energy0: float
    source: SourceDirection | None = None
    energy_drift: float = 0.0
    flags: dict = field(default_factory=dict)

    def __len__(self):
        return self.s.size


def hamiltonian(x, p, medium: Medium):
    """H(x, p) = |p|^2_g - n^2(x), batched."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    p2 = np.sum(p * p, axis=-1)
    n2 = medium.n2_jet(x, order=0).value
    if medium.metric.is_euclidean:
        return p2 - n2
    c = medium.metric.factor_jet(x, order=0).value
    return p2 / c - n2


def hamiltonian_rhs(x, p, medium: Medium):
    """(dx/ds, dp/ds) = (2 g^{ij} p_j, -d_i g^{jk} p_j p_k + d_i n^2)."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    n2 = medium.n2_jet(x, order=1)
    if medium.metric.is_euclidean:
        return 2.0 * p, n2.grad
    c = medium.metric.factor_jet(x, order=1)
    cv = c.value[..., None]
    p2 = np.sum(p * p, axis=-1)[..., None]
    dx = 2.0 * p / cv
    dp = p2 * c.grad / cv ** 2 + n2.grad
    return dx, dp


def _rk4_step(x, p, dt, medium):
    """One classical RK4 step; dt may be per-ray with shape (..., 1)."""
    k1x, k1p = hamiltonian_rhs(x, p, medium)
    k2x, k2p = hamiltonian_rhs(x + 0.5 * dt * k1x, p + 0.5 * dt * k1p, medium)
    k3x, k3p = hamiltonian_rhs(x + 0.5 * dt * k2x, p + 0.5 * dt * k2p, medium)
    k4x, k4p = hamiltonian_rhs(x + dt * k3x, p + dt * k3p, medium)
    xn = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    pn = p + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
    return xn, pn


def trace_fan(fan, medium: Medium, opts: TraceOptions | None = None) -> list[RayPath]:
    """Trace a whole fan in one vectorized march; results ordered as the fan."""
    opts = opts or TraceOptions()
    dom = medium.domain
    N = len(fan)
    X = np.array([src.x0 for src in fan], dtype=float)
    P = np.array([src.omega0 for src in fan], dtype=float)
    H0 = hamiltonian(X, P, medium)
    h = opts.h
    max_steps = int(np.ceil(opts.max_span_factor * dom.diameter / h))

    xs = [X.copy()]
    ps = [P.copy()]
    active = np.ones(N, dtype=bool)
    cross_k = np.full(N, -1, dtype=int)     # step index of the last interior sample
    x_in = X.copy()
    p_in = P.copy()

    for k in range(max_steps):
        if not active.any():
            break
        Xn, Pn = _rk4_step(X, P, h, medium)
        rho = dom.rho(Xn)
        crossed = active & (rho >= 0.0)
        if crossed.any():
            x_in[crossed] = X[crossed]
            p_in[crossed] = P[crossed]
            cross_k[crossed] = k
            active[crossed] = False
        keep = active
        X = np.where(keep[:, None], Xn, X)
        P = np.where(keep[:, None], Pn, P)
        xs.append(X.copy())
        ps.append(P.copy())

    if active.any():
        idx = np.nonzero(active)[0]
        raise TrappedRayError(
            f"{idx.size} ray(s) exceeded the trapping guard "
            f"({opts.max_span_factor} * diameter): fan indices {idx.tolist()}",
            indices=idx.tolist())

    # vectorized bisection of the crossing substep, all rays at once
    lo = np.zeros(N)
    hi = np.full(N, h)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        Xm, _ = _rk4_step(x_in, p_in, mid[:, None], medium)
        f = dom.rho(Xm)
        out = f >= 0.0
        hi = np.where(out, mid, hi)
        lo = np.where(out, lo, mid)
    sigma = hi
    Xe, Pe = _rk4_step(x_in, p_in, sigma[:, None], medium)
    rho_exit = dom.rho(Xe)
    if np.max(np.abs(rho_exit)) > opts.rho_tol:
        bad = np.nonzero(np.abs(rho_exit) > opts.rho_tol)[0]
        raise IntegrationError(
            f"exit refinement failed for fan indices {bad.tolist()}")

    xs = np.stack(xs, axis=0)   # (T, N, 2)
    ps = np.stack(ps, axis=0)

    rays = []
    fail_tol = opts.energy_fail_tol
    flag_tol = opts.energy_flag_tol
    for i, src in enumerate(fan):
        K = cross_k[i] + 1               # interior sample count
        s = np.arange(K, dtype=float) * h
        tau = cross_k[i] * h + sigma[i]
        s = np.append(s, tau)
        x = np.vstack([xs[:K, i, :], Xe[i]])
        p = np.vstack([ps[:K, i, :], Pe[i]])
        Hs = hamiltonian(x, p, medium)
        drift = float(np.max(np.abs(Hs - H0[i])))
        if drift > fail_tol * (1.0 + abs(H0[i])):
            raise IntegrationError(
                f"energy drift {drift:.3e} on fan index {i} exceeds "
                f"{fail_tol:.1e} * (1 + |H0|)")
        flags = {"energy_flag": drift > flag_tol * (1.0 + abs(H0[i]))}
        rays.append(RayPath(s=s, x=x, p=p, tau=float(tau), exit_point=Xe[i].copy(),
                            exit_momentum=Pe[i].copy(), energy0=float(H0[i]),
                            source=src, energy_drift=drift, flags=flags))
    return rays


def trace(src: SourceDirection, medium: Medium,
          opts: TraceOptions | None = None) -> RayPath:
    return trace_fan([src], medium, opts)[0]


def exit_time_table(fan, medium: Medium, opts: TraceOptions | None = None,
                    rays: list[RayPath] | None = None) -> np.ndarray:
    """Exit times tau arranged by (theta_index, dir_index); NaN where the
    fan has no entry (filtered grazing directions)."""
    if rays is None:
        rays = trace_fan(fan, medium, opts)
    nt = max(s.theta_index for s in fan) + 1
    nd = max(s.dir_index for s in fan) + 1
    table = np.full((nt, nd), np.nan)
    for src, ray in zip(fan, rays):
        table[src.theta_index, src.dir_index] = ray.tau
    return table
