"""Domains, boundary parametrization, and source-fan sampling.

All domains are strictly convex subsets of R^2 described by a defining
function rho (negative inside, zero on the boundary, |grad rho| = 1 on
the boundary).  Three kinds are supported:

* ``disk``        -- rho is the exact signed distance to a circle;
* ``ellipse``     -- rho is the signed distance, nearest point by Newton;
* ``convex-polygon-smoothed`` -- log-sum-exp smoothing of the edge
  half-planes, first-order normalized so |grad rho| = 1 on the boundary.

Every evaluation accepts batched points with shape (..., 2).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError
from .jets import Jet


@dataclass(frozen=True)
class SourceDirection:
    """One boundary source: position x0 and inward initial momentum."""

    x0: np.ndarray
    omega0: np.ndarray
    theta_index: int
    dir_index: int
    theta: float = 0.0      # boundary parameter of x0
    psi: float = 0.0        # angular offset from the inward normal


def _rot(v, angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([c * v[..., 0] - s * v[..., 1],
                     s * v[..., 0] + c * v[..., 1]], axis=-1)


def _norm_jet(y: np.ndarray, floor: float = 1e-60) -> Jet:
    """Jet of r = |y| with respect to y; y shape (..., 2), r > 0 assumed.

    The floor keeps r**5 away from underflow; callers that can hit r = 0
    (deep-clamp paths) discard these jets anyway.
    """
    r = np.linalg.norm(y, axis=-1)
    r = np.maximum(r, floor)
    yhat = y / r[..., None]
    eye = np.eye(2)
    hess = (eye - np.einsum("...i,...j->...ij", yhat, yhat)) / r[..., None, None]
    # D3 |y| = 3 y_i y_j y_k / r^5 - (d_ij y_k + d_ik y_j + d_jk y_i) / r^3
    yyy = np.einsum("...i,...j,...k->...ijk", y, y, y)
    dy = np.einsum("ij,...k->...ijk", eye, y)
    sym = dy + np.einsum("...ijk->...ikj", dy) + np.einsum("...ijk->...kji", dy)
    third = 3.0 * yyy / r[..., None, None, None] ** 5 - sym / r[..., None, None, None] ** 3
    return Jet(r, yhat, hess, third)


@dataclass
class DomainSpec:
    """Strictly convex 2D domain with unit-gradient defining function.

    radius_or_axes: radius for 'disk', (a, b) for 'ellipse'; for
    'convex-polygon-smoothed' it is a derived characteristic radius and
    `vertices` (counterclockwise, convex) plus `smoothing` drive rho.
    """

    kind: str
    radius_or_axes: object = 1.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    boundary_samples: int = 720
    vertices: np.ndarray | None = None
    smoothing: float | None = None
    margin_rel: float = 0.2   # extended-domain inflation, fraction of radius

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.kind == "disk":
            self._R = float(self.radius_or_axes)
            if self._R <= 0:
                raise ConfigError("domain.radius_or_axes must be positive")
        elif self.kind == "ellipse":
            a, b = self.radius_or_axes
            self._axes = (float(a), float(b))
            if min(self._axes) <= 0:
                raise ConfigError("domain.radius_or_axes must be positive")
            self._R = max(self._axes)
        elif self.kind == "convex-polygon-smoothed":
            if self.vertices is None:
                raise ConfigError("domain.vertices required for polygon kind")
            V = np.asarray(self.vertices, dtype=float)
            if V.ndim != 2 or V.shape[0] < 3 or V.shape[1] != 2:
                raise ConfigError("domain.vertices must be (V>=3, 2)")
            self.vertices = V
            # CCW orientation; flip if the shoelace area is negative
            x, y = V[:, 0], V[:, 1]
            area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
            if area < 0:
                self.vertices = V = V[::-1].copy()
            e = np.roll(V, -1, axis=0) - V
            n_out = np.stack([e[:, 1], -e[:, 0]], axis=1)
            n_out /= np.linalg.norm(n_out, axis=1, keepdims=True)
            self._edge_n = n_out
            self._edge_b = np.einsum("ij,ij->i", n_out, V)
            rel = V - self.center
            self._R = float(np.max(np.linalg.norm(rel, axis=1)))
            # inradius of the polygon as seen from the configured center
            self._r_in = float(np.min(self._edge_b - self._edge_n @ self.center))
            if self._r_in <= 0:
                raise ConfigError("domain.center must lie inside the polygon")
            if self.smoothing is None:
                self.smoothing = 25.0 / self._R
            # log-sum-exp shifts the zero level inward by log(E)/smoothing;
            # too-soft smoothing can leave no interior at all
            if float(self.rho(self.center[None])[0]) >= 0.0:
                raise ConfigError("domain.smoothing too soft: smoothed "
                                  "polygon interior is empty")
        else:
            raise ConfigError(f"domain.kind unknown: {self.kind!r}")

    # -- defining function ------------------------------------------------

    @property
    def radius(self) -> float:
        return self._R

    @property
    def margin(self) -> float:
        return self.margin_rel * self._R

    @property
    def diameter(self) -> float:
        if self.kind == "disk":
            return 2.0 * self._R
        if self.kind == "ellipse":
            return 2.0 * max(self._axes)
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.max(np.linalg.norm(d, axis=-1)))

    def rho(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = x - self.center
        if self.kind == "disk":
            return np.linalg.norm(z, axis=-1) - self._R
        if self.kind == "ellipse":
            t = self._ellipse_nearest(z)
            a, b = self._axes
            P = np.stack([a * np.cos(t), b * np.sin(t)], axis=-1)
            dist = np.linalg.norm(z - P, axis=-1)
            phi = (z[..., 0] / a) ** 2 + (z[..., 1] / b) ** 2 - 1.0
            return np.where(phi >= 0, dist, -dist)
        rho0, grad0 = self._lse(x)[:2]
        # first-order normalization; the floor only matters deep inside,
        # where |grad rho0| can vanish by symmetry
        g = np.maximum(np.linalg.norm(grad0, axis=-1), 0.5)
        return rho0 / g

    def rho_grad(self, x: np.ndarray) -> np.ndarray:
        """Unit outward direction of increase of rho (exact on the boundary)."""
        x = np.asarray(x, dtype=float)
        z = x - self.center
        if self.kind == "disk":
            r = np.linalg.norm(z, axis=-1, keepdims=True)
            return z / np.maximum(r, 1e-300)
        if self.kind == "ellipse":
            a, b = self._axes
            t = self._ellipse_nearest(z)
            P = np.stack([a * np.cos(t), b * np.sin(t)], axis=-1)
            d = z - P
            dist = np.linalg.norm(d, axis=-1, keepdims=True)
            phi = (z[..., 0] / a) ** 2 + (z[..., 1] / b) ** 2 - 1.0
            sgn = np.where(phi >= 0, 1.0, -1.0)[..., None]
            # fall back to the level-set normal right on the boundary
            lvl = np.stack([2 * z[..., 0] / a ** 2, 2 * z[..., 1] / b ** 2], axis=-1)
            lvl /= np.linalg.norm(lvl, axis=-1, keepdims=True)
            return np.where(dist > 1e-12, sgn * d / np.maximum(dist, 1e-300), lvl)
        grad0 = self._lse(x)[1]
        return grad0 / np.linalg.norm(grad0, axis=-1, keepdims=True)

    def inside(self, x) -> np.ndarray:
        return self.rho(x) < 0.0

    def in_extended(self, x) -> np.ndarray:
        return self.rho(x) < self.margin

    # -- ellipse nearest-point --------------------------------------------

    def _ellipse_nearest(self, z: np.ndarray) -> np.ndarray:
        a, b = self._axes
        t = np.arctan2(a * z[..., 1], b * z[..., 0])
        for _ in range(60):
            ct, st = np.cos(t), np.sin(t)
            Px, Py = a * ct, b * st
            dPx, dPy = -a * st, b * ct
            g = (z[..., 0] - Px) * dPx + (z[..., 1] - Py) * dPy
            gp = (-(dPx ** 2 + dPy ** 2)
                  + (z[..., 0] - Px) * (-Px) + (z[..., 1] - Py) * (-Py))
            step = g / gp
            t = t - step
            if np.max(np.abs(step)) < 1e-15:
                break
        return t

    # -- smoothed polygon --------------------------------------------------

    def _lse(self, x: np.ndarray):
        """rho0 and its first three derivative tensors (softmax moments)."""
        kappa = self.smoothing
        ell = np.einsum("ei,...i->...e", self._edge_n, x) - self._edge_b
        m = np.max(kappa * ell, axis=-1, keepdims=True)
        w = np.exp(kappa * ell - m)
        Z = np.sum(w, axis=-1, keepdims=True)
        w = w / Z
        rho0 = (m[..., 0] + np.log(Z[..., 0])) / kappa
        mu = np.einsum("...e,ei->...i", w, self._edge_n)
        aa = np.einsum("ei,ej->eij", self._edge_n, self._edge_n)
        m2 = np.einsum("...e,eij->...ij", w, aa)
        cov = m2 - np.einsum("...i,...j->...ij", mu, mu)
        hess = kappa * cov
        aaa = np.einsum("ei,ej,ek->eijk", self._edge_n, self._edge_n, self._edge_n)
        m3 = np.einsum("...e,eijk->...ijk", w, aaa)
        mm2 = np.einsum("...i,...jk->...ijk", mu, m2)
        mu3 = (m3
               - mm2 - np.einsum("...ijk->...jik", mm2) - np.einsum("...ijk->...kji", mm2)
               + 2.0 * np.einsum("...i,...j,...k->...ijk", mu, mu, mu))
        third = kappa ** 2 * mu3
        return rho0, mu, hess, third

    # -- interior level for field blending ---------------------------------

    def level_jet(self, x: np.ndarray) -> Jet:
        """Smooth interior level u: 0 on the boundary, increasing inward.

        Only the near-boundary band matters (field blending); deep inside
        the level is clamped to the constant 1, which taper windows map to
        1 identically, so the clamp never surfaces in a field value.
        """
        x = np.asarray(x, dtype=float)
        z = x - self.center
        batch = z.shape[:-1]
        if self.kind == "disk":
            r = np.linalg.norm(z, axis=-1)
            j = _norm_jet(z)
            u = Jet((self._R - j.value) / self._R, -j.grad / self._R,
                    -j.hess / self._R, -j.third / self._R)
            deep = r < 0.5 * self._R
            return _clamp_deep(u, deep)
        if self.kind == "ellipse":
            a, b = self._axes
            t = np.array([1.0 / a, 1.0 / b])
            y = z * t
            q = np.linalg.norm(y, axis=-1)
            j = _norm_jet(y)
            grad = j.grad * t
            hess = j.hess * np.einsum("i,j->ij", t, t)
            third = j.third * np.einsum("i,j,k->ijk", t, t, t)
            u = Jet(1.0 - j.value, -grad, -hess, -third)
            deep = q < 0.5
            return _clamp_deep(u, deep)
        rho0, grad, hess, third = self._lse(x)
        u = Jet(-rho0 / self._r_in, -grad / self._r_in,
                -hess / self._r_in, -third / self._r_in)
        deep = rho0 < -0.5 * self._r_in
        return _clamp_deep(u, deep)

    # -- boundary parametrization ------------------------------------------

    def boundary_point(self, theta):
        """Point on the boundary and the inward unit normal there."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "disk":
            e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            return self.center + self._R * e, -e
        if self.kind == "ellipse":
            a, b = self._axes
            p = self.center + np.stack([a * np.cos(theta), b * np.sin(theta)], axis=-1)
            n = np.stack([np.cos(theta) / a, np.sin(theta) / b], axis=-1)
            n /= np.linalg.norm(n, axis=-1, keepdims=True)
            return p, -n
        scalar = theta.ndim == 0
        thetas = np.atleast_1d(theta)
        pts = np.empty(thetas.shape + (2,))
        for i, th in np.ndenumerate(thetas):
            e = np.array([np.cos(th), np.sin(th)])
            f = lambda t: float(self.rho(self.center + t * e))
            hi = self._R
            while f(hi) < 0:
                hi *= 1.5
            t_star = brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-15)
            pts[i] = self.center + t_star * e
        n = self.rho_grad(pts)
        if scalar:
            return pts[0], -n[0]
        return pts, -n

    def boundary_nodes(self):
        """The configured uniform boundary parameter grid and its points."""
        thetas = np.arange(self.boundary_samples) * (2 * np.pi / self.boundary_samples)
        pts, normals = self.boundary_point(thetas)
        return thetas, pts, normals


def _clamp_deep(u: Jet, deep: np.ndarray) -> Jet:
    value = np.where(deep, 1.0, u.value)
    grad = np.where(deep[..., None], 0.0, u.grad)
    hess = np.where(deep[..., None, None], 0.0, u.hess)
    third = np.where(deep[..., None, None, None], 0.0, u.third)
    return Jet(value, grad, hess, third)


def sample_inward_sphere(dom: DomainSpec, n_points: int, n_dirs: int,
                         speed_rule=1.0, span=2.0 * np.pi / 3.0,
                         cutoff: float = 0.05) -> list[SourceDirection]:
    """Uniform fan over the inward boundary sphere bundle.

    n_points boundary positions x n_dirs directions spread over `span`
    radians centered on the inward normal; directions whose inner product
    with the inward normal falls below `cutoff` are dropped (grazing).
    speed_rule fixes |omega0|: a constant, or a callable of x0.
    """
    if n_points < 1 or n_dirs < 1:
        raise ConfigError("fan.n_points and fan.n_dirs must be >= 1")
    thetas = np.arange(n_points) * (2 * np.pi / n_points)
    psis = np.array([0.0]) if n_dirs == 1 else np.linspace(-span / 2, span / 2, n_dirs)
    fan = []
    for i, th in enumerate(thetas):
        x0, nu_in = dom.boundary_point(float(th))
        for j, psi in enumerate(psis):
            what = _rot(nu_in, psi)
            if float(np.dot(nu_in, what)) < cutoff:
                continue
            speed = speed_rule(x0) if callable(speed_rule) else float(speed_rule)
            fan.append(SourceDirection(
                x0=np.array(x0), omega0=speed * what,
                theta_index=i, dir_index=j, theta=float(th), psi=float(psi)))
    if not fan:
        raise ConfigError("fan is empty after transversality filtering")
    return fan
