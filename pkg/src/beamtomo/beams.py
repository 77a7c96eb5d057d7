"""Zeroth-order Gaussian beams along traced rays.

Along each ray the complex symmetric Hessian M(s), the phase S(s), and
the log-amplitude are co-integrated with RK4 on the ray's own s grid:

    -dM/ds = Hpp M M + Hxp M + M Hpx + Hxx   (second derivatives of
             Htilde(x,p) = p . dH/dp = 2|p|^2_g),
    dS/ds = 2|p|^2_g,
    d(log a0)/ds = -(alpha n^2 + tr M).

All rays of a fan propagate in one vectorized batch.  The field
evaluator returns a0 exp(i lam psi) phi, with psi the quadratic phase
around the closest ray point and phi a C^2 smoothstep cutoff between
lam^-tube_exponent and twice that.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (BeamBreakdownError, ConfigError, ContractViolation)
from .fields import Medium
from .rays import RayPath, hamiltonian_rhs

__all__ = ["BeamConfig", "BeamState", "BeamField", "default_M0",
           "riccati_rhs", "propagate_beam", "propagate_fan", "eval_field"]


@dataclass
class BeamConfig:
    lam: float
    alpha: float = 0.5
    M0: np.ndarray | None = None        # complex (2,2); None = per-ray default
    tube_exponent: float = 0.25          # cutoff radius = lam**-tube_exponent

    def __post_init__(self):
        if self.lam < 10.0:
            raise ConfigError("beam.lambda must be >= 10")
        # alpha = 0 is admitted for diagnostics (no attenuation channel)
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("beam.alpha must lie in [0, 1)")
        if self.M0 is not None:
            self.M0 = np.asarray(self.M0, dtype=complex)
            if self.M0.shape != (2, 2):
                raise ConfigError("beam.M0 must be 2x2")


def default_M0(xdot0: np.ndarray, pdot0: np.ndarray) -> np.ndarray:
    """Initial Hessian i*P_perp + symmetric rank-one completion.

    Satisfies M0 = M0^T, M0 xdot = pdot, Im M0 = identity on xdot^perp.
    """
    v = np.asarray(xdot0, dtype=float)
    w = np.asarray(pdot0, dtype=float)
    n2 = v @ v
    P_par = np.outer(v, v) / n2
    P_perp = np.eye(2) - P_par
    real = (np.outer(w, v) + np.outer(v, w)) / n2 - (v @ w) * np.outer(v, v) / n2 ** 2
    return real + 1j * P_perp


def _validate_M0(M0, xdot0, pdot0):
    if np.max(np.abs(M0 - M0.T)) > 1e-14:
        raise ContractViolation("M0 must be symmetric to 1e-14")
    defect = np.linalg.norm(M0 @ xdot0 - pdot0)
    if defect > 1e-8 * (1.0 + np.linalg.norm(pdot0)):
        raise ContractViolation("M0 must satisfy M0 xdot(0) = pdot(0)")
    v = np.array([-xdot0[1], xdot0[0]])
    v /= np.linalg.norm(v)
    if (v @ M0.imag @ v) <= 0:
        raise ContractViolation("Im M0 must be positive definite on xdot(0)^perp")


def riccati_rhs(x, p, M, medium: Medium):
    """dM/ds for the Hessian flow of Htilde = 2|p|^2_g; batched."""
    M = np.asarray(M, dtype=complex)
    asym = np.max(np.abs(M - np.swapaxes(M, -1, -2)))
    if asym > 1e-8:
        raise ContractViolation(f"riccati_rhs: M asymmetric by {asym:.2e}")
    if medium.metric.is_euclidean:
        rhs = -4.0 * (M @ M)
    else:
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        c = medium.metric.factor_jet(x, order=2)
        cv = c.value[..., None, None]
        p2 = np.sum(p * p, axis=-1)[..., None, None]
        # A_jl = d2 Htilde / dx_j dp_l = -4 p_l c_j / c^2
        A = -4.0 * np.einsum("...j,...l->...jl", c.grad, p) / cv ** 2
        C = 2.0 * p2 * (2.0 * np.einsum("...j,...k->...jk", c.grad, c.grad)
                        / cv ** 3 - c.hess / cv ** 2)
        rhs = -((4.0 / cv) * (M @ M) + A @ M + M @ np.swapaxes(A, -1, -2) + C)
    return 0.5 * (rhs + np.swapaxes(rhs, -1, -2))


def _joint_rhs(x, p, M, cfg: BeamConfig, medium: Medium):
    dx, dp = hamiltonian_rhs(x, p, medium)
    dM = riccati_rhs(x, p, M, medium)
    n2 = medium.n2_jet(x, order=0).value
    if medium.metric.is_euclidean:
        p2g = np.sum(p * p, axis=-1)
    else:
        c = medium.metric.factor_jet(x, order=0).value
        p2g = np.sum(p * p, axis=-1) / c
    dS = 2.0 * p2g
    trM = M[..., 0, 0] + M[..., 1, 1]
    dlogA = -(cfg.alpha * n2 + trM)
    return dx, dp, dM, dS, dlogA


@dataclass
class BeamState:
    """Per-sample beam data along one ray, plus node derivatives for
    cubic Hermite interpolation of every stored quantity."""

    ray: RayPath
    M: np.ndarray          # (K, 2, 2) complex
    S: np.ndarray          # (K,)
    a0: np.ndarray         # (K,) complex
    config: BeamConfig
    logA: np.ndarray = None
    xdot: np.ndarray = None
    pdot: np.ndarray = None
    Mdot: np.ndarray = None
    Sdot: np.ndarray = None
    logAdot: np.ndarray = None

    def constraint_defect(self) -> float:
        """max_k |M xdot - pdot| / (1 + |pdot|): the inherited-constraint gap."""
        Mx = np.einsum("kij,kj->ki", self.M, self.xdot.astype(complex))
        num = np.linalg.norm(Mx - self.pdot, axis=1)
        den = 1.0 + np.linalg.norm(self.pdot, axis=1)
        return float(np.max(num / den))

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.M - np.swapaxes(self.M, 1, 2))))

    def min_transverse_im(self) -> float:
        v = np.stack([-self.xdot[:, 1], self.xdot[:, 0]], axis=1)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return float(np.min(np.einsum("ki,kij,kj->k", v, self.M.imag, v)))


def propagate_fan(rays: list[RayPath], cfg: BeamConfig,
                  medium: Medium) -> list["BeamState"]:
    """Propagate the beam system along every ray of a fan in one batch."""
    N = len(rays)
    lengths = np.array([len(r) for r in rays])
    Kmax = int(lengths.max())
    s_pad = np.zeros((N, Kmax))
    for i, r in enumerate(rays):
        s_pad[i, :lengths[i]] = r.s
        s_pad[i, lengths[i]:] = r.s[-1]

    X = np.array([r.x[0] for r in rays])
    P = np.array([r.p[0] for r in rays])
    xdot0, pdot0 = hamiltonian_rhs(X, P, medium)
    M = np.empty((N, 2, 2), dtype=complex)
    for i in range(N):
        M0 = cfg.M0 if cfg.M0 is not None else default_M0(xdot0[i], pdot0[i])
        _validate_M0(np.asarray(M0, dtype=complex), xdot0[i], pdot0[i])
        M[i] = M0
    S = np.zeros(N)
    logA = np.zeros(N, dtype=complex)

    hist_x = np.empty((Kmax, N, 2))
    hist_p = np.empty((Kmax, N, 2))
    hist_M = np.empty((Kmax, N, 2, 2), dtype=complex)
    hist_S = np.empty((Kmax, N))
    hist_logA = np.empty((Kmax, N), dtype=complex)
    hist_x[0], hist_p[0], hist_M[0] = X, P, M
    hist_S[0], hist_logA[0] = S, logA

    for k in range(Kmax - 1):
        dt = s_pad[:, k + 1] - s_pad[:, k]
        d1 = dt[:, None]
        d2 = dt[:, None, None]

        k1 = _joint_rhs(X, P, M, cfg, medium)
        k2 = _joint_rhs(X + 0.5 * d1 * k1[0], P + 0.5 * d1 * k1[1],
                        M + 0.5 * d2 * k1[2], cfg, medium)
        k3 = _joint_rhs(X + 0.5 * d1 * k2[0], P + 0.5 * d1 * k2[1],
                        M + 0.5 * d2 * k2[2], cfg, medium)
        k4 = _joint_rhs(X + d1 * k3[0], P + d1 * k3[1], M + d2 * k3[2],
                        cfg, medium)

        X = X + d1 / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        P = P + d1 / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        M = M + d2 / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        S = S + dt / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        logA = logA + dt / 6.0 * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
        M = 0.5 * (M + np.swapaxes(M, 1, 2))

        hist_x[k + 1], hist_p[k + 1], hist_M[k + 1] = X, P, M
        hist_S[k + 1], hist_logA[k + 1] = S, logA

    beams = []
    for i, ray in enumerate(rays):
        L = lengths[i]
        x = hist_x[:L, i]
        p = hist_p[:L, i]
        Mi = hist_M[:L, i]
        Si = hist_S[:L, i]
        logAi = hist_logA[:L, i]
        xdot, pdot = hamiltonian_rhs(x, p, medium)
        Mdot = riccati_rhs(x, p, Mi, medium)
        _, _, _, Sdot, logAdot = _joint_rhs(x, p, Mi, cfg, medium)

        v = np.stack([-xdot[:, 1], xdot[:, 0]], axis=1)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        trans = np.einsum("ki,kij,kj->k", v, Mi.imag, v)
        if np.any(trans <= 0):
            k_bad = int(np.argmax(trans <= 0))
            raise BeamBreakdownError(
                f"Im M lost transverse positivity at s = {ray.s[k_bad]:.6f} "
                f"(fan index {i})", s=float(ray.s[k_bad]))

        beams.append(BeamState(
            ray=ray, M=Mi, S=Si, a0=np.exp(logAi), config=cfg, logA=logAi,
            xdot=xdot, pdot=pdot, Mdot=Mdot, Sdot=Sdot, logAdot=logAdot))
    return beams


def propagate_beam(ray: RayPath, cfg: BeamConfig, medium: Medium) -> BeamState:
    return propagate_fan([ray], cfg, medium)[0]


# -- field evaluation ---------------------------------------------------------

def _hermite_weights(u):
    """Cubic Hermite basis and its first two u-derivatives."""
    u2, u3 = u * u, u * u * u
    h = (2 * u3 - 3 * u2 + 1, u3 - 2 * u2 + u, -2 * u3 + 3 * u2, u3 - u2)
    hp = (6 * u2 - 6 * u, 3 * u2 - 4 * u + 1, -6 * u2 + 6 * u, 3 * u2 - 2 * u)
    hpp = (12 * u - 6, 6 * u - 4, -12 * u + 6, 6 * u - 2)
    return h, hp, hpp


def _interp(h, dl, ya, yd_a, yb, yd_b, extra_dims):
    """Hermite combination with per-query interval length dl."""
    h00, h10, h01, h11 = h
    shape = h00.shape + (1,) * extra_dims
    h00 = h00.reshape(shape)
    h10 = h10.reshape(shape)
    h01 = h01.reshape(shape)
    h11 = h11.reshape(shape)
    dl = dl.reshape(shape)
    return h00 * ya + h10 * dl * yd_a + h01 * yb + h11 * dl * yd_b


@dataclass
class BeamField:
    """Evaluator x -> U(x) for one propagated beam."""

    beam: BeamState
    cutoff_radius: float = field(init=False)

    PROJECTION_PAD = 0.02   # extrapolated flow-parameter margin past each ray end

    def __post_init__(self):
        cfg = self.beam.config
        self.cutoff_radius = cfg.lam ** (-cfg.tube_exponent)
        # end segments can be arbitrarily short (interpolated exit crossing);
        # extrapolation past the ray span anchors on full-length segments
        ds = np.diff(self.beam.ray.s)
        good = np.nonzero(ds >= 0.25 * np.median(ds))[0]
        self._j_head = int(good[0]) if good.size else 0
        self._j_tail = int(good[-1]) if good.size else ds.size - 1

    # closest-point parameter ------------------------------------------------

    def _project(self, q: np.ndarray) -> np.ndarray:
        """Initial closest s by projection onto the sampled polyline."""
        P = self.beam.ray.x
        s = self.beam.ray.s
        E = P[1:] - P[:-1]                       # (K-1, 2)
        EE = np.einsum("kj,kj->k", E, E)
        out = np.empty(q.shape[0])
        for a in range(0, q.shape[0], 4096):
            qc = q[a:a + 4096]
            W = qc[:, None, :] - P[None, :-1, :]
            t = np.einsum("qkj,kj->qk", W, E) / EE[None, :]
            t = np.clip(t, 0.0, 1.0)
            D = W - t[..., None] * E[None, :, :]
            d2 = np.einsum("qkj,qkj->qk", D, D)
            jstar = np.argmin(d2, axis=1)
            rows = np.arange(qc.shape[0])
            out[a:a + 4096] = s[jstar] + t[rows, jstar] * (s[jstar + 1] - s[jstar])
        return out

    def _locate(self, sq):
        s = self.beam.ray.s
        j = np.searchsorted(s, sq, side="right") - 1
        j = np.clip(j, 0, s.size - 2)
        j = np.where(sq >= s[-1], self._j_tail, j)
        j = np.where(sq <= s[0], self._j_head, j)
        dl = s[j + 1] - s[j]
        u = (sq - s[j]) / dl
        return j, u, dl

    def _refine(self, q, sq, iters=2):
        """Newton steps on (q - x(s)) . xdot(s) = 0 with Hermite x(s).

        The closest-point parameter may run slightly past the ray span:
        clamping it at the endpoints would put a curvature kink in the
        boundary profile exactly at the exit spot, which the peak fit
        then aliases on.  The end segments extrapolate smoothly instead.
        """
        b = self.beam
        tau = b.ray.tau
        pad = self.PROJECTION_PAD
        for _ in range(iters):
            j, u, dl = self._locate(sq)
            h, hp, hpp = _hermite_weights(u)
            xa, xb = b.ray.x[j], b.ray.x[j + 1]
            va, vb = b.xdot[j], b.xdot[j + 1]
            x = _interp(h, dl, xa, va, xb, vb, 1)
            dldim = dl[:, None]
            xd = (hp[0][:, None] * xa + hp[2][:, None] * xb) / dldim \
                + hp[1][:, None] * va + hp[3][:, None] * vb
            xdd = (hpp[0][:, None] * xa + hpp[2][:, None] * xb) / dldim ** 2 \
                + (hpp[1][:, None] * va + hpp[3][:, None] * vb) / dldim
            w = q - x
            g = np.einsum("qj,qj->q", w, xd)
            gp = -np.einsum("qj,qj->q", xd, xd) + np.einsum("qj,qj->q", w, xdd)
            step = g / gp
            sq = np.clip(sq - step, -pad, tau + pad)
        return sq

    # field ------------------------------------------------------------------

    def eval_batch(self, xs: np.ndarray, apply_cutoff: bool = True,
                   return_geometry: bool = False):
        b = self.beam
        lam = b.config.lam
        q = np.asarray(xs, dtype=float).reshape(-1, 2)
        sq = self._refine(q, self._project(q))
        j, u, dl = self._locate(sq)
        h, _, _ = _hermite_weights(u)

        xstar = _interp(h, dl, b.ray.x[j], b.xdot[j], b.ray.x[j + 1], b.xdot[j + 1], 1)
        pstar = _interp(h, dl, b.ray.p[j], b.pdot[j], b.ray.p[j + 1], b.pdot[j + 1], 1)
        Mstar = _interp(h, dl, b.M[j], b.Mdot[j], b.M[j + 1], b.Mdot[j + 1], 2)
        Sstar = _interp(h, dl, b.S[j], b.Sdot[j], b.S[j + 1], b.Sdot[j + 1], 0)
        logAstar = _interp(h, dl, b.logA[j], b.logAdot[j],
                           b.logA[j + 1], b.logAdot[j + 1], 0)

        w = q - xstar
        psi = Sstar + np.einsum("qj,qj->q", w, pstar) \
            + 0.5 * np.einsum("qi,qij,qj->q", w, Mstar, w)
        U = np.exp(logAstar + 1j * lam * psi)

        r = np.linalg.norm(w, axis=1)
        if apply_cutoff:
            rc = self.cutoff_radius
            t = np.clip((r - rc) / rc, 0.0, 1.0)
            phi = 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)
            U = np.where(r >= 2.0 * rc, 0.0, U * phi)
        if return_geometry:
            return U, sq, r
        return U

    def eval(self, x, apply_cutoff: bool = True) -> complex:
        return complex(self.eval_batch(np.asarray(x, dtype=float).reshape(1, 2),
                                       apply_cutoff=apply_cutoff)[0])


def eval_field(bf: BeamField, x, apply_cutoff: bool = True):
    """Complex beam amplitude U(x); exactly 0 outside the cutoff support."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return bf.eval(x, apply_cutoff=apply_cutoff)
    return bf.eval_batch(x, apply_cutoff=apply_cutoff)
