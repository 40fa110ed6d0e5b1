"""Discrete varifolds and their construction from curves, meshes and images.

A discrete varifold is a finite sum of weighted Diracs ``r_i delta_(x_i, d_i)``
with positions ``x_i`` in R^n (n = 2 or 3), unit directions ``d_i`` and
positive weights ``r_i``. It is stored as three arrays; the ``Dirac`` tuple is
only a convenience view.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

UNIT_TOL = 1e-12
DISTINCT_TOL = 1e-12
DEGENERATE_TOL = 1e-12


class VarifoldError(ValueError):
    """Invalid varifold, shape or image data."""


class Dirac(NamedTuple):
    position: np.ndarray
    direction: np.ndarray
    weight: float


def _normalize_rows(v):
    norms = np.linalg.norm(v, axis=1)
    return v / norms[:, None], norms


@dataclass(frozen=True, eq=False)
class DiscreteVarifold:
    """Weighted Diracs stored as ``x`` (P, n), ``d`` (P, n) and ``r`` (P,).

    Directions are renormalized on construction. A direction whose norm is off
    by more than ``unit_tol`` is rejected, as are non-positive weights and
    duplicated (position, direction) pairs.
    """

    x: np.ndarray
    d: np.ndarray
    r: np.ndarray

    def __init__(self, x, d, r=None, *, unit_tol=UNIT_TOL, check_distinct=True):
        x = np.array(x, dtype=float, ndmin=2)
        d = np.array(d, dtype=float, ndmin=2)
        if x.size == 0 and d.size == 0:
            n = x.shape[1] if x.ndim == 2 and x.shape[1] else (d.shape[1] if d.shape[1] else 2)
            x = np.zeros((0, n))
            d = np.zeros((0, n))
        r = np.ones(len(x)) if r is None else np.array(r, dtype=float).reshape(-1)
        if x.ndim != 2 or x.shape != d.shape or r.shape != (x.shape[0],):
            raise VarifoldError(
                f"inconsistent shapes: x {x.shape}, d {d.shape}, r {r.shape}"
            )
        if x.shape[1] not in (2, 3):
            raise VarifoldError(f"dimension must be 2 or 3, got {x.shape[1]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(d)) and np.all(np.isfinite(r))):
            raise VarifoldError("non-finite entries in varifold data")
        if np.any(r <= 0):
            i = int(np.argmax(r <= 0))
            raise VarifoldError(f"dirac {i} has non-positive weight {r[i]}")
        if len(x):
            d, norms = _normalize_rows(d)
            bad = np.abs(norms - 1.0) > unit_tol
            if np.any(bad):
                i = int(np.argmax(bad))
                raise VarifoldError(f"dirac {i} has direction norm {norms[i]!r}, expected 1")
            if check_distinct:
                dup = _duplicate_pair(x, d)
                if dup is not None:
                    raise VarifoldError(f"diracs {dup[0]} and {dup[1]} coincide in (position, direction)")
        for a in (x, d, r):
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "r", r)

    @classmethod
    def from_diracs(cls, diracs, dimension=None):
        diracs = list(diracs)
        if not diracs:
            n = dimension or 2
            return cls(np.zeros((0, n)), np.zeros((0, n)), np.zeros(0))
        x = np.array([np.asarray(dc[0], dtype=float) for dc in diracs])
        d = np.array([np.asarray(dc[1], dtype=float) for dc in diracs])
        r = np.array([float(dc[2]) for dc in diracs])
        return cls(x, d, r)

    @property
    def dimension(self):
        return self.x.shape[1]

    @property
    def diracs(self):
        return [Dirac(self.x[i], self.d[i], float(self.r[i])) for i in range(len(self))]

    @property
    def total_mass(self):
        return float(np.sum(self.r))

    def __len__(self):
        return self.x.shape[0]

    def __repr__(self):
        return f"DiscreteVarifold(P={len(self)}, n={self.dimension}, mass={self.total_mass:.6g})"

    def permuted(self, perm):
        perm = np.asarray(perm)
        return DiscreteVarifold(self.x[perm], self.d[perm], self.r[perm], check_distinct=False)

    def has_distinct_positions(self, tol=DISTINCT_TOL):
        """Membership in the single-direction-per-point subspace."""
        if len(self) < 2:
            return True
        return not cKDTree(self.x).query_pairs(tol, p=np.inf)


def _duplicate_pair(x, d, tol=DISTINCT_TOL):
    if len(x) < 2:
        return None
    pairs = cKDTree(np.hstack([x, d])).query_pairs(tol, p=np.inf)
    if not pairs:
        return None
    return min(pairs)


@dataclass(frozen=True, eq=False)
class PolylineCurve:
    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float, ndmin=2)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise VarifoldError(f"curve vertices must be (N, 2) or (N, 3), got {v.shape}")
        if len(v) < 2:
            raise VarifoldError("a curve needs at least 2 vertices")
        object.__setattr__(self, "vertices", v)

    def segments(self):
        v = self.vertices
        heads = np.roll(v, -1, axis=0) if self.closed else v[1:]
        tails = v if self.closed else v[:-1]
        return tails, heads


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float, ndmin=2)
        f = np.array(self.faces, dtype=np.int64, ndmin=2)
        if v.ndim != 2 or v.shape[1] != 3:
            raise VarifoldError(f"mesh vertices must be (N, 3), got {v.shape}")
        if f.size and (f.ndim != 2 or f.shape[1] != 3):
            raise VarifoldError(f"mesh faces must be (F, 3), got {f.shape}")
        f = f.reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            bad = int(np.argmax((f < 0).any(axis=1) | (f >= len(v)).any(axis=1)))
            raise VarifoldError(f"face {bad} has a vertex index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major grayscale image; pixel (row, col) sits at ``spacing * (col, row)``."""

    width: int
    height: int
    pixels: np.ndarray
    pixel_spacing: float = 1.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise VarifoldError("image dimensions must be positive")
        px = np.asarray(self.pixels, dtype=float).reshape(-1)
        if px.size != self.width * self.height:
            raise VarifoldError(
                f"pixel count {px.size} does not match {self.width}x{self.height}"
            )
        if not self.pixel_spacing > 0:
            raise VarifoldError("pixel spacing must be positive")
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, arr, pixel_spacing=1.0):
        arr = np.asarray(arr, dtype=float)
        return cls(arr.shape[1], arr.shape[0], arr.reshape(-1), pixel_spacing)

    def as_array(self):
        return self.pixels.reshape(self.height, self.width)


def curve_to_varifold(curve):
    """One Dirac per segment: midpoint, length, unit tangent along vertex order."""
    tails, heads = curve.segments()
    edges = heads - tails
    lengths = np.linalg.norm(edges, axis=1)
    bad = np.flatnonzero(lengths < DEGENERATE_TOL)
    if bad.size:
        raise VarifoldError(f"degenerate segment {int(bad[0])} (length {lengths[bad[0]]:.3g})")
    return DiscreteVarifold(0.5 * (tails + heads), edges / lengths[:, None], lengths)


def mesh_to_varifold(mesh):
    """One Dirac per face: barycenter, area, right-hand-rule unit normal."""
    v, f = mesh.vertices, mesh.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    cross = np.cross(b - a, c - a)
    twice_area = np.linalg.norm(cross, axis=1)
    bad = np.flatnonzero(twice_area < DEGENERATE_TOL)
    if bad.size:
        raise VarifoldError(f"degenerate face {int(bad[0])} (zero area)")
    return DiscreteVarifold((a + b + c) / 3.0, cross / twice_area[:, None], 0.5 * twice_area)


def image_gradient(img):
    """Central-difference gradient on interior pixels, in physical units.

    Returns ``(gx, gy)`` of shape (height - 2, width - 2); x runs along
    columns and y along rows.
    """
    if img.width < 3 or img.height < 3:
        raise VarifoldError(f"image {img.width}x{img.height} is smaller than 3x3")
    a = img.as_array()
    h = img.pixel_spacing
    gx = (a[1:-1, 2:] - a[1:-1, :-2]) / (2 * h)
    gy = (a[2:, 1:-1] - a[:-2, 1:-1]) / (2 * h)
    return gx, gy


def image_to_varifold(img, grad_threshold=1e-8):
    """Unit image gradients at interior pixels where ``|grad I| > grad_threshold``.

    Every emitted Dirac has weight 1.
    """
    if grad_threshold < 0:
        raise VarifoldError("grad_threshold must be nonnegative")
    gx, gy = image_gradient(img)
    mag = np.hypot(gx, gy)
    rows, cols = np.nonzero(mag > grad_threshold)
    if rows.size == 0:
        return DiscreteVarifold(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))
    h = img.pixel_spacing
    x = np.column_stack([(cols + 1) * h, (rows + 1) * h])
    g = np.column_stack([gx[rows, cols], gy[rows, cols]])
    return DiscreteVarifold(x, g / mag[rows, cols][:, None], np.ones(rows.size))


def rigid_transform(mu, R, h):
    """Apply ``(x, d, r) -> (R x + h, R d, r)`` for a proper rotation ``R``."""
    R = np.asarray(R, dtype=float)
    h = np.asarray(h, dtype=float).reshape(-1)
    n = mu.dimension
    if R.shape != (n, n) or h.shape != (n,):
        raise VarifoldError(f"rigid motion shapes {R.shape}, {h.shape} do not match dimension {n}")
    if np.linalg.norm(R.T @ R - np.eye(n)) > 1e-10:
        raise VarifoldError("R is not orthogonal")
    if np.linalg.det(R) < 0:
        raise VarifoldError("R is a reflection, not a rotation")
    return DiscreteVarifold(mu.x @ R.T + h, mu.d @ R.T, mu.r, check_distinct=False)
