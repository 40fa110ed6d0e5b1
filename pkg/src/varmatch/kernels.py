"""Scalar kernel profiles.

Three families of radial/zonal profiles are needed:

* the spatial profile ``rho`` of the varifold metric, evaluated on squared
  distances ``|x - x'|^2``;
* the orientation profile ``gamma`` of the varifold metric, evaluated on
  cosines ``<d, d'>``;
* the deformation profile ``h`` of the scalar kernel ``K(x, y) = h(|x-y|^2) I``
  generating the velocity fields.

All functions accept scalars or numpy arrays and broadcast.
"""

from dataclasses import dataclass

import numpy as np

ORIENTATION_FAMILIES = ("linear", "binet", "unoriented-gaussian", "oriented-gaussian")
_GAUSSIAN_ORIENTATIONS = ("unoriented-gaussian", "oriented-gaussian")


def _canonical_family(name):
    return str(name).strip().lower().replace("_", "-")


@dataclass(frozen=True)
class SpatialKernel:
    """Gaussian spatial profile ``rho(s) = exp(-s / sigma^2)``."""

    sigma: float = 1.0
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise ValueError(f"unsupported spatial kernel family {self.family!r}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class OrientationKernel:
    """Orientation profile ``gamma``; ``sigma_s`` is needed by the Gaussian families."""

    family: str = "oriented-gaussian"
    sigma_s: float | None = 1.0

    def __post_init__(self):
        family = _canonical_family(self.family)
        if family not in ORIENTATION_FAMILIES:
            raise ValueError(
                f"unknown orientation kernel {self.family!r}; expected one of {ORIENTATION_FAMILIES}"
            )
        object.__setattr__(self, "family", family)
        if family in _GAUSSIAN_ORIENTATIONS:
            if self.sigma_s is None or not self.sigma_s > 0:
                raise ValueError(f"{family} kernel needs a positive sigma_s")

    @property
    def is_even(self):
        return self.family in ("binet", "unoriented-gaussian")


@dataclass(frozen=True)
class DeformationKernel:
    """Gaussian deformation profile ``h(s) = exp(-s / sigma_v^2)``."""

    sigma_v: float = 1.0
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise ValueError(f"unsupported deformation kernel family {self.family!r}")
        if not self.sigma_v > 0:
            raise ValueError(f"sigma_v must be positive, got {self.sigma_v}")


def rho_derivs(k, s, order=0):
    """Spatial profile ``rho`` (order 0) or its derivative ``rho'`` (order 1)."""
    if order not in (0, 1):
        raise ValueError(f"rho derivatives are available up to order 1, not {order}")
    inv = 1.0 / k.sigma**2
    val = np.exp(-np.asarray(s, dtype=float) * inv)
    return val if order == 0 else -inv * val


def gamma_derivs(k, t, order=0, clamp=True):
    """Orientation profile ``gamma(t)`` or ``gamma'(t)`` at cosines ``t``.

    With ``clamp`` the cosines are clipped to [-1, 1] first, which absorbs the
    rounding noise of unit vectors. The fidelity gradients evaluate the
    profiles unclamped so that they stay exact derivatives off the sphere.
    """
    if order not in (0, 1):
        raise ValueError(f"gamma derivatives are available up to order 1, not {order}")
    t = np.asarray(t, dtype=float)
    if clamp:
        t = np.clip(t, -1.0, 1.0)
    fam = k.family
    if fam == "linear":
        return t if order == 0 else np.ones_like(t)
    if fam == "binet":
        return t * t if order == 0 else 2.0 * t
    c = 2.0 / k.sigma_s**2
    if fam == "unoriented-gaussian":
        val = np.exp(-c * (1.0 - t * t))
        return val if order == 0 else 2.0 * c * t * val
    val = np.exp(-c * (1.0 - t))
    return val if order == 0 else c * val


def h_derivs(k, s, order=0):
    """Deformation profile derivative of the given order (0 to 3).

    For the Gaussian profile the m-th derivative is ``(-1/sigma_v^2)^m h(s)``.
    """
    if order not in (0, 1, 2, 3):
        raise ValueError(f"h derivatives are available up to order 3, not {order}")
    a = -1.0 / k.sigma_v**2
    return a**order * np.exp(a * np.asarray(s, dtype=float))


def h_all(k, s):
    """``h, h', h'', h'''`` at once, sharing the exponential."""
    a = -1.0 / k.sigma_v**2
    e = np.exp(a * s)
    return e, a * e, a * a * e, a * a * a * e
