"""Value-and-derivative tensors up to order 3 with product/chain rules.

A "jet" bundles (f, grad f, D2 f, D3 f) at a point, or at a batch of
points: all arrays carry leading batch dimensions, so shapes are
(...,), (..., d), (..., d, d), (..., d, d, d).  The coefficient fields
produce jets and the ray/beam right-hand sides consume them.  Only the
combinators the fields actually need are implemented.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Jet:
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    third: np.ndarray

    @property
    def dim(self) -> int:
        return self.grad.shape[-1]

    def copy(self) -> "Jet":
        return Jet(np.array(self.value), self.grad.copy(),
                   self.hess.copy(), self.third.copy())


def const_jet(c, d: int, batch_shape=()) -> Jet:
    value = np.broadcast_to(np.asarray(c, dtype=float), batch_shape).copy()
    return Jet(
        value,
        np.zeros(batch_shape + (d,)),
        np.zeros(batch_shape + (d, d)),
        np.zeros(batch_shape + (d, d, d)),
    )


def add(a: Jet, b: Jet) -> Jet:
    return Jet(a.value + b.value, a.grad + b.grad,
               a.hess + b.hess, a.third + b.third)


def scale(a: Jet, c: float) -> Jet:
    return Jet(c * a.value, c * a.grad, c * a.hess, c * a.third)


def _sym_gh(g: np.ndarray, H: np.ndarray) -> np.ndarray:
    # symmetrization of g_i H_jk over (i, j, k); H must be symmetric
    t = np.einsum("...i,...jk->...ijk", g, H)
    return t + np.einsum("...ijk->...jik", t) + np.einsum("...ijk->...kji", t)


def mul(a: Jet, b: Jet) -> Jet:
    """Leibniz product rule through third order."""
    av = a.value[..., None]
    bv = b.value[..., None]
    value = a.value * b.value
    grad = av * b.grad + bv * a.grad
    hess = (a.value[..., None, None] * b.hess
            + b.value[..., None, None] * a.hess
            + np.einsum("...i,...j->...ij", a.grad, b.grad)
            + np.einsum("...i,...j->...ij", b.grad, a.grad))
    third = (a.value[..., None, None, None] * b.third
             + b.value[..., None, None, None] * a.third
             + _sym_gh(a.grad, b.hess) + _sym_gh(b.grad, a.hess))
    return Jet(value, grad, hess, third)


def chain(f0, f1, f2, f3, u: Jet) -> Jet:
    """Jet of phi(u) given phi's plain derivatives f0..f3 at u.value.

    Faa di Bruno through order 3:
      D3 phi(u) = f3 u_i u_j u_k + f2 (u_i u_jk + u_j u_ik + u_k u_ij) + f1 u_ijk
    """
    g, H, T = u.grad, u.hess, u.third
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    f3 = np.asarray(f3, dtype=float)
    value = f0
    grad = f1[..., None] * g
    hess = (f2[..., None, None] * np.einsum("...i,...j->...ij", g, g)
            + f1[..., None, None] * H)
    ggg = np.einsum("...i,...j,...k->...ijk", g, g, g)
    gH = np.einsum("...i,...jk->...ijk", g, H)
    third = (f3[..., None, None, None] * ggg
             + f2[..., None, None, None] * (gH
                                            + np.einsum("...ijk->...jik", gH)
                                            + np.einsum("...ijk->...kji", gH))
             + f1[..., None, None, None] * T)
    return Jet(value, grad, hess, third)
