"""Kernel metric on discrete varifolds and its gradients.

For ``mu = sum r_i delta_(x_i, d_i)`` and ``nu = sum s_j delta_(y_j, e_j)``::

    <mu, nu> = sum_ij r_i s_j rho(|x_i - y_j|^2) gamma(<d_i, e_j>)

and the fidelity term is ``|mu - nu|^2 = <mu,mu> - 2 <mu,nu> + <nu,nu>``.
Sums are taken over a fixed row-block partition and reduced in block order so
that the result does not depend on the number of worker threads.
"""

from dataclasses import dataclass, field

import numpy as np

from ._parallel import blocks, ordered_map
from .kernels import OrientationKernel, SpatialKernel, gamma_derivs, rho_derivs
from .varifold import DiscreteVarifold, VarifoldError

NEGATIVE_TOL = 1e-10


@dataclass(frozen=True)
class FidelityConfig:
    spatial: SpatialKernel = field(default_factory=SpatialKernel)
    orientation: OrientationKernel = field(default_factory=OrientationKernel)


def _check_dims(mu, nu):
    if mu.dimension != nu.dimension:
        raise VarifoldError(f"dimension mismatch: {mu.dimension} vs {nu.dimension}")


def _pair_terms(cfg, x, d, y, e, order):
    diff = x[:, None, :] - y[None, :, :]
    s = np.einsum("ijk,ijk->ij", diff, diff)
    t = d @ e.T
    rho = rho_derivs(cfg.spatial, s)
    gam = gamma_derivs(cfg.orientation, t, clamp=False)
    if order == 0:
        return rho, gam
    return (
        diff,
        rho,
        rho_derivs(cfg.spatial, s, 1),
        gam,
        gamma_derivs(cfg.orientation, t, 1, clamp=False),
    )


def cross_arrays(cfg, x, d, r, y, e, s):
    """Raw-array inner product; directions are used as given."""
    if len(x) == 0 or len(y) == 0:
        return 0.0

    def block_sum(sl):
        rho, gam = _pair_terms(cfg, x[sl], d[sl], y, e, 0)
        return r[sl] @ (rho * gam) @ s

    return float(np.sum(ordered_map(block_sum, blocks(len(x)))))


def distance_arrays(cfg, x, d, r, y, e, s):
    """Raw-array squared distance, clamped at 0 for rounding-level negatives."""
    aa = cross_arrays(cfg, x, d, r, x, d, r)
    bb = cross_arrays(cfg, y, e, s, y, e, s)
    ab = cross_arrays(cfg, x, d, r, y, e, s)
    val = aa - 2.0 * ab + bb
    if val < 0:
        if val < -NEGATIVE_TOL * max(1.0, aa + bb):
            raise ArithmeticError(
                f"negative squared distance {val:.3e}: kernel configuration is not positive"
            )
        val = 0.0
    return val


def inner_product(cfg, mu, nu):
    _check_dims(mu, nu)
    return cross_arrays(cfg, mu.x, mu.d, mu.r, nu.x, nu.d, nu.r)


def squared_distance(cfg, mu, nu):
    _check_dims(mu, nu)
    return distance_arrays(cfg, mu.x, mu.d, mu.r, nu.x, nu.d, nu.r)


def _cross_gradient(cfg, x, d, r, y, e, s):
    """Gradients of ``<mu, nu>`` with respect to ``x_i``, ``d_i`` and ``r_i``."""
    gx = np.zeros_like(x)
    gd = np.zeros_like(d)
    gr = np.zeros(len(x))
    if len(x) == 0 or len(y) == 0:
        return gx, gd, gr

    def block_grad(sl):
        diff, rho, drho, gam, dgam = _pair_terms(cfg, x[sl], d[sl], y, e, 1)
        ws = s[None, :]
        a = 2.0 * drho * gam * ws
        bx = np.einsum("ij,ijk->ik", a, diff)
        bd = (rho * dgam * ws) @ e
        br = (rho * gam) @ s
        return sl, bx, bd, br

    for sl, bx, bd, br in ordered_map(block_grad, blocks(len(x))):
        gx[sl] = r[sl, None] * bx
        gd[sl] = r[sl, None] * bd
        gr[sl] = br
    return gx, gd, gr


def gradient_arrays(cfg, x, d, r, y, e, s):
    """Gradients of ``|mu - nu|^2`` with respect to the Diracs of ``mu``.

    The self term contributes twice (each Dirac appears on both sides of the
    double sum); the cross term with the target enters with a factor -2.
    """
    sx, sd, sr = _cross_gradient(cfg, x, d, r, x, d, r)
    cx, cd, cr = _cross_gradient(cfg, x, d, r, y, e, s)
    return 2.0 * (sx - cx), 2.0 * (sd - cd), 2.0 * (sr - cr)


def grad_fidelity_normalized(cfg, mu_final, target):
    """``(dg/dx_i, dg/dd_i)`` with weights held fixed; ambient (unprojected) gradients."""
    _check_dims(mu_final, target)
    gx, gd, _ = gradient_arrays(
        cfg, mu_final.x, mu_final.d, mu_final.r, target.x, target.d, target.r
    )
    return gx, gd


def pushforward_gradient_arrays(cfg, x, u, y, e, s):
    """Gradient of the fidelity with respect to ``(x_i, u_i)`` where ``u_i = r_i d_i``."""
    r = np.linalg.norm(u, axis=1)
    if len(r) and r.min() <= 1e-12:
        raise ArithmeticError(f"mass collapse: |u_{int(np.argmin(r))}| = {r.min():.3e}")
    d = u / r[:, None]
    gx, gd, gr = gradient_arrays(cfg, x, d, r, y, e, s)
    tangential = gd - np.sum(gd * d, axis=1)[:, None] * d
    gu = tangential / r[:, None] + gr[:, None] * d
    return gx, gu


def grad_fidelity_pushforward(cfg, q_final, target):
    """Gradient for final states given as ``(x, u)`` arrays or a list of pairs."""
    if isinstance(q_final, tuple) and len(q_final) == 2 and np.ndim(q_final[0]) == 2:
        x, u = (np.asarray(a, dtype=float) for a in q_final)
    else:
        x = np.array([np.asarray(pair[0], dtype=float) for pair in q_final])
        u = np.array([np.asarray(pair[1], dtype=float) for pair in q_final])
    if x.shape[1] != target.dimension:
        raise VarifoldError(f"dimension mismatch: {x.shape[1]} vs {target.dimension}")
    return pushforward_gradient_arrays(cfg, x, u, target.x, target.d, target.r)


def pushforward_varifold(x, u):
    """Varifold ``sum |u_i| delta_(x_i, u_i/|u_i|)`` from a pushforward state."""
    r = np.linalg.norm(u, axis=1)
    return DiscreteVarifold(x, u / r[:, None], r, check_distinct=False)


__all__ = [
    "FidelityConfig",
    "inner_product",
    "squared_distance",
    "grad_fidelity_normalized",
    "grad_fidelity_pushforward",
    "pushforward_varifold",
]
