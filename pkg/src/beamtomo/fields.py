"""Smooth coefficient fields (n^2, potentials, conformal factors).

A ScalarField evaluates to a value and derivative tensors up to order 3
at batched points.  Kinds:

* ``constant``           -- exact everywhere;
* ``gaussian_bump_sum``  -- base + window(x) * sum of Gaussian bumps, where
  the window tapers the bumps to zero near the domain boundary so that
  sound-speed fields are identically `base` on a boundary strip;
* ``gridded``            -- tensor-product quintic spline over uniform
  samples (quintic so that third derivatives stay continuous).

The taper window is a 7th-order smoothstep in the domain's interior
level: C^3 across both seams, which keeps the full order-3 jet of the
field continuous.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import ConfigError, ExtrapolationError, OutOfDomainError
from .geometry import DomainSpec
from .jets import Jet, add, chain, const_jet, mul

_CANON = {"gaussian-bump-sum": "gaussian_bump_sum"}


def _smoothstep7(t):
    """35t^4 - 84t^5 + 70t^6 - 20t^7 on [0,1]: C^3 with flat ends."""
    t = np.clip(t, 0.0, 1.0)
    f0 = t ** 4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))
    f1 = t ** 3 * (140.0 + t * (-420.0 + t * (420.0 - 140.0 * t)))
    f2 = t ** 2 * (420.0 + t * (-1680.0 + t * (2100.0 - 840.0 * t)))
    f3 = t * (840.0 + t * (-5040.0 + t * (8400.0 - 4200.0 * t)))
    inside = (t > 0.0) & (t < 1.0)
    return f0, np.where(inside, f1, 0.0), np.where(inside, f2, 0.0), \
        np.where(inside, f3, 0.0)


@dataclass
class ScalarField:
    kind: str
    params: dict
    boundary_value: float = 1.0
    domain: DomainSpec | None = None

    def __post_init__(self):
        self.kind = _CANON.get(self.kind, self.kind)
        if self.kind == "constant":
            self._value = float(self.params["value"])
        elif self.kind == "gaussian_bump_sum":
            bumps = self.params.get("bumps", [])
            self._base = float(self.params.get("base", self.boundary_value))
            self._centers = np.array([b["center"] for b in bumps], dtype=float).reshape(-1, 2)
            self._widths = np.array([b["width"] for b in bumps], dtype=float)
            self._amps = np.array([b["amp"] for b in bumps], dtype=float)
            if np.any(self._widths <= 0):
                raise ConfigError("n2.bumps[].width must be positive")
            taper = self.params.get("taper")
            if taper is not None and self.domain is None:
                raise ConfigError("tapered field needs a domain")
            self._taper = (float(taper["lo"]), float(taper["hi"])) if taper else None
        elif self.kind == "gridded":
            xs = np.asarray(self.params["xs"], dtype=float)
            ys = np.asarray(self.params["ys"], dtype=float)
            vals = np.asarray(self.params["values"], dtype=float)
            if vals.shape != (xs.size, ys.size):
                raise ConfigError("gridded values must have shape (len(xs), len(ys))")
            if xs.size < 6 or ys.size < 6:
                raise ConfigError("gridded field needs at least 6 samples per axis")
            self._spl = RectBivariateSpline(xs, ys, vals, kx=5, ky=5)
            self._hull = (xs[0], xs[-1], ys[0], ys[-1])
        else:
            raise ConfigError(f"field kind unknown: {self.kind!r}")

    # -- construction helpers ----------------------------------------------

    @staticmethod
    def constant(value: float, domain=None) -> "ScalarField":
        return ScalarField("constant", {"value": value},
                           boundary_value=value, domain=domain)

    @staticmethod
    def from_function(fn, domain: DomainSpec, h: float) -> "ScalarField":
        """Sample fn on a uniform grid over the extended bounding box."""
        pad = domain.margin + 2 * h
        lo = domain.center - (domain.radius + pad)
        hi = domain.center + (domain.radius + pad)
        xs = np.arange(lo[0], hi[0] + h, h)
        ys = np.arange(lo[1], hi[1] + h, h)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X, Y], axis=-1)
        vals = fn(pts)
        return ScalarField("gridded", {"xs": xs, "ys": ys, "values": vals},
                           domain=domain)

    # -- evaluation ----------------------------------------------------------

    def jet(self, x: np.ndarray, order: int = 3) -> Jet:
        """Order-`order` jet at batched points (..., 2); no domain check."""
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        if self.kind == "constant":
            return const_jet(self._value, 2, batch)
        if self.kind == "gaussian_bump_sum":
            return self._bump_jet(x, order)
        return self._grid_jet(x, order)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.jet(x, order=0).value

    def _bump_jet(self, x, order):
        batch = x.shape[:-1]
        total = const_jet(0.0, 2, batch)
        eye = np.eye(2)
        for c, w, A in zip(self._centers, self._widths, self._amps):
            z = x - c
            r2 = np.sum(z * z, axis=-1)
            E = A * np.exp(-0.5 * r2 / w ** 2)
            grad = np.zeros(batch + (2,))
            hess = np.zeros(batch + (2, 2))
            third = np.zeros(batch + (2, 2, 2))
            if order >= 1:
                grad = -(z / w ** 2) * E[..., None]
            if order >= 2:
                zz = np.einsum("...i,...j->...ij", z, z)
                hess = (zz / w ** 4 - eye / w ** 2) * E[..., None, None]
            if order >= 3:
                dz = np.einsum("ij,...k->...ijk", eye, z)
                sym = dz + np.einsum("...ijk->...ikj", dz) + np.einsum("...ijk->...kji", dz)
                zzz = np.einsum("...i,...j,...k->...ijk", z, z, z)
                third = (sym / w ** 4 - zzz / w ** 6) * E[..., None, None, None]
            total = add(total, Jet(E, grad, hess, third))
        if self._taper is not None:
            lo, hi = self._taper
            u = self.domain.level_jet(x)
            t = (u.value - lo) / (hi - lo)
            f0, f1, f2, f3 = _smoothstep7(t)
            d = 1.0 / (hi - lo)
            W = chain(f0, f1 * d, f2 * d ** 2, f3 * d ** 3, u)
            total = mul(W, total)
        if order < 3:
            total.third[:] = 0.0
        if order < 2:
            total.hess[:] = 0.0
        if order < 1:
            total.grad[:] = 0.0
        return add(const_jet(self._base, 2, batch), total)

    def _grid_jet(self, x, order):
        batch = x.shape[:-1]
        xf = x.reshape(-1, 2)
        x0, x1, y0, y1 = self._hull
        if np.any(xf[:, 0] < x0) or np.any(xf[:, 0] > x1) \
                or np.any(xf[:, 1] < y0) or np.any(xf[:, 1] > y1):
            raise ExtrapolationError("gridded field evaluated outside its sample hull")

        def d(dx, dy):
            return self._spl(xf[:, 0], xf[:, 1], dx=dx, dy=dy, grid=False)

        value = d(0, 0)
        grad = np.zeros((xf.shape[0], 2))
        hess = np.zeros((xf.shape[0], 2, 2))
        third = np.zeros((xf.shape[0], 2, 2, 2))
        if order >= 1:
            grad[:, 0], grad[:, 1] = d(1, 0), d(0, 1)
        if order >= 2:
            hess[:, 0, 0], hess[:, 1, 1] = d(2, 0), d(0, 2)
            hess[:, 0, 1] = hess[:, 1, 0] = d(1, 1)
        if order >= 3:
            fxxx, fxxy, fxyy, fyyy = d(3, 0), d(2, 1), d(1, 2), d(0, 3)
            third[:, 0, 0, 0] = fxxx
            third[:, 1, 1, 1] = fyyy
            for idx in [(0, 0, 1), (0, 1, 0), (1, 0, 0)]:
                third[(slice(None),) + idx] = fxxy
            for idx in [(0, 1, 1), (1, 0, 1), (1, 1, 0)]:
                third[(slice(None),) + idx] = fxyy
        return Jet(value.reshape(batch), grad.reshape(batch + (2,)),
                   hess.reshape(batch + (2, 2)), third.reshape(batch + (2, 2, 2)))

    # -- misc ----------------------------------------------------------------

    def to_spec(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self._value}
        if self.kind == "gaussian_bump_sum":
            spec = {"kind": "gaussian_bump_sum", "base": self._base,
                    "bumps": [{"center": list(map(float, c)), "width": float(w),
                               "amp": float(A)}
                              for c, w, A in zip(self._centers, self._widths, self._amps)]}
            if self._taper is not None:
                spec["taper"] = {"lo": self._taper[0], "hi": self._taper[1]}
            return spec
        xs = self.params["xs"]
        ys = self.params["ys"]
        vals = np.asarray(self.params["values"])
        return {"kind": "gridded",
                "xs": [float(xs[0]), float(xs[-1]), int(np.size(xs))],
                "ys": [float(ys[0]), float(ys[-1]), int(np.size(ys))],
                "sha256": hashlib.sha256(vals.tobytes()).hexdigest()}


def eval_field(f: ScalarField, x, order: int = 3):
    """Public field evaluation: returns (value[, grad[, hess[, third]]]).

    Enforces the extended-domain precondition when the field carries a
    domain; raises OutOfDomainError otherwise.
    """
    if not 0 <= order <= 3:
        raise ConfigError("order must be in 0..3")
    x = np.asarray(x, dtype=float)
    if f.domain is not None and not np.all(f.domain.in_extended(x)):
        raise OutOfDomainError("evaluation point outside the extended domain")
    j = f.jet(x, order=order)
    out = (j.value, j.grad, j.hess, j.third)
    return out[:order + 1]


@dataclass
class MetricSpec:
    """Euclidean or conformal metric g = c(x) * identity."""

    kind: str = "euclidean"
    factor: ScalarField | None = None
    d: int = 2

    def __post_init__(self):
        if self.kind not in ("euclidean", "conformal"):
            raise ConfigError(f"metric.kind unknown: {self.kind!r}")
        if self.kind == "conformal" and self.factor is None:
            raise ConfigError("conformal metric needs a factor field")

    @property
    def is_euclidean(self) -> bool:
        return self.kind == "euclidean"

    def factor_jet(self, x, order=2) -> Jet:
        j = self.factor.jet(x, order=order)
        if np.any(j.value <= 0):
            raise ConfigError("conformal factor must be strictly positive")
        return j

    def to_spec(self) -> dict:
        if self.is_euclidean:
            return {"kind": "euclidean", "d": self.d}
        return {"kind": "conformal", "d": self.d, "factor": self.factor.to_spec()}


@dataclass
class Medium:
    """Domain + sound-speed field + metric, the bundle rays propagate in."""

    domain: DomainSpec
    n2: ScalarField
    metric: MetricSpec = dc_field(default_factory=MetricSpec)

    def n2_jet(self, x, order=2) -> Jet:
        return self.n2.jet(x, order=order)

    def domain_spec(self) -> dict:
        d = {"kind": self.domain.kind, "center": list(map(float, self.domain.center)),
             "boundary_samples": int(self.domain.boundary_samples)}
        if self.domain.kind == "disk":
            d["radius"] = float(self.domain.radius)
        elif self.domain.kind == "ellipse":
            d["axes"] = list(map(float, self.domain._axes))
        else:
            d["vertices"] = np.asarray(self.domain.vertices).tolist()
            d["smoothing"] = float(self.domain.smoothing)
        return d

    def to_spec(self) -> dict:
        return {"domain": self.domain_spec(), "n2": self.n2.to_spec(),
                "metric": self.metric.to_spec()}

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_spec(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()
