"""Synthetic shapes and registration setups used by the demos and the tests."""

import numpy as np

from .varifold import DiscreteVarifold, GrayImage, PolylineCurve, TriangleMesh, image_gradient


def _unit(deg):
    t = np.deg2rad(deg)
    return np.array([np.cos(t), np.sin(t)])


def circle_polyline(segments, radius=1.0, center=(0.0, 0.0)):
    t = 2 * np.pi * np.arange(segments) / segments
    v = np.column_stack([np.cos(t), np.sin(t)]) * radius + np.asarray(center, dtype=float)
    return PolylineCurve(v, closed=True)


def semicircle_polyline(segments, radius=1.0):
    t = np.pi * np.arange(segments + 1) / segments
    return PolylineCurve(np.column_stack([np.cos(t), np.sin(t)]) * radius, closed=False)


def icosphere(level=3):
    """Unit sphere triangulation by repeated 4-split of an icosahedron, outward normals."""
    g = (1 + 5**0.5) / 2
    verts = [
        (-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0),
        (0, -1, g), (0, 1, g), (0, -1, -g), (0, 1, -g),
        (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(np.array(verts), np.array(faces))


# ---------------------------------------------------------------- images

# (center x, center y, semi-axis a, semi-axis b, angle in degrees, intensity)
PHANTOM_ELLIPSES = (
    (0.50, 0.50, 0.30, 0.36, 0.0, 0.5),
    (0.42, 0.55, 0.06, 0.12, 15.0, 0.4),
    (0.60, 0.55, 0.06, 0.10, -15.0, 0.4),
    (0.50, 0.30, 0.06, 0.045, 0.0, 0.3),
)
PHANTOM_EDGE_WIDTH = 0.3
# keeps only pixels on the ellipse boundaries
PHANTOM_THRESHOLD_FRACTION = 0.5


def ellipse_phantom(size=64, ellipses=PHANTOM_ELLIPSES, edge_width=PHANTOM_EDGE_WIDTH):
    """Sum of smoothed ellipse indicators sampled on a ``size x size`` grid over [0, 1]^2.

    ``edge_width`` is the width of the logistic edge profile, in pixels.
    """
    h = 1.0 / size
    c = np.arange(size) * h
    X, Y = np.meshgrid(c, c)
    img = np.zeros((size, size))
    for cx, cy, a, b, ang, val in ellipses:
        t = np.deg2rad(ang)
        xr = (X - cx) * np.cos(t) + (Y - cy) * np.sin(t)
        yr = -(X - cx) * np.sin(t) + (Y - cy) * np.cos(t)
        signed = (1.0 - np.sqrt((xr / a) ** 2 + (yr / b) ** 2)) * min(a, b)
        img += val / (1.0 + np.exp(-signed / (edge_width * h)))
    return GrayImage.from_array(img, pixel_spacing=h)


def warp_ellipses(ellipses, shift=(0.0, 0.0), scale=(1.0, 1.0), center=(0.5, 0.5)):
    """Affine-warped ellipse parameters (anisotropic scaling about ``center`` then shift)."""
    out = []
    for cx, cy, a, b, ang, val in ellipses:
        ncx = center[0] + scale[0] * (cx - center[0]) + shift[0]
        ncy = center[1] + scale[1] * (cy - center[1]) + shift[1]
        out.append((ncx, ncy, a * scale[0], b * scale[1], ang, val))
    return tuple(out)


def phantom_pair(size=64, shift=(0.03, -0.02), scale=(1.08, 0.94)):
    """Template phantom and a warped target phantom with inverted contrast."""
    template = ellipse_phantom(size)
    warped = ellipse_phantom(size, warp_ellipses(PHANTOM_ELLIPSES, shift, scale))
    arr = warped.as_array()
    inverted = GrayImage.from_array(arr.max() - arr, pixel_spacing=warped.pixel_spacing)
    return template, inverted


def phantom_threshold(template):
    """Gradient threshold used to extract the phantom varifolds."""
    gx, gy = image_gradient(template)
    return PHANTOM_THRESHOLD_FRACTION * float(np.hypot(gx, gy).max())


# ---------------------------------------------------------------- Dirac setups


def two_dirac_pairs(flip_target=False):
    """Pairs of Diracs sharing one position, for the kernel-choice experiments.

    The template carries directions at 0 and 90 degrees at the origin. The
    target sits at (0.4, 0.2) with directions at 30 and 135 degrees, or their
    opposites at 210 and 315 degrees when ``flip_target`` is set.
    """
    template = DiscreteVarifold(np.zeros((2, 2)), [_unit(0.0), _unit(90.0)], [1.0, 1.0])
    angles = (30.0, 135.0)
    if flip_target:
        angles = tuple(a + 180.0 for a in angles)
    pos = np.array([0.4, 0.2])
    target = DiscreteVarifold(np.tile(pos, (2, 1)), [_unit(a) for a in angles], [1.0, 1.0])
    return template, target


def unflipped_target_directions():
    return np.array([_unit(30.0), _unit(135.0)])


def two_dirac_sum_pairs():
    """Same-position pairs whose summed vectors differ by a pure stretch.

    Template: unit vectors at 0 and 90 degrees. Target: vectors (0.8, 0.6) and
    (0.6, 0.8), i.e. weights 1 at about 36.9 and 53.1 degrees. Matching
    only the sums needs a stretch along the diagonal; matching each vector
    needs a much stronger shear.
    """
    template = DiscreteVarifold(np.zeros((2, 2)), [_unit(0.0), _unit(90.0)], [1.0, 1.0])
    u = np.array([[0.8, 0.6], [0.6, 0.8]])
    pos = np.array([0.3, 0.1])
    target = DiscreteVarifold(np.tile(pos, (2, 1)), u, np.linalg.norm(u, axis=1))
    return template, target


def multidirectional_pair(seed=0):
    """Grid points carrying one to three directions each, and a bent, rotated copy."""
    rng = np.random.default_rng(seed)
    xs, ds = [], []
    for gx in np.linspace(-1.0, 1.0, 4):
        for gy in np.linspace(-1.0, 1.0, 4):
            k = 1 + (int(4 * (gx + 1) + 3 * (gy + 1)) % 3)
            base = rng.uniform(0, 180)
            for j in range(k):
                xs.append((gx, gy))
                ds.append(_unit(base + j * 180.0 / k))
    x = np.array(xs)
    d = np.array(ds)
    template = DiscreteVarifold(x, d, np.full(len(x), 0.5))
    ang = np.deg2rad(20.0)
    R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    bent = x + 0.15 * np.column_stack([np.sin(np.pi * x[:, 1] / 2), np.zeros(len(x))])
    jac_shear = np.array([[1.0, 0.2], [0.0, 1.0]])
    td = (d @ jac_shear.T) @ R.T
    target = DiscreteVarifold(bent @ R.T, td / np.linalg.norm(td, axis=1)[:, None], np.full(len(x), 0.5))
    return template, target


def ellipse_curve_pair(segments=40):
    """Closed ellipse and a bulged copy, as curves."""
    t = 2 * np.pi * np.arange(segments) / segments
    a = np.column_stack([1.0 * np.cos(t), 0.6 * np.sin(t)])
    b = np.column_stack([(1.0 + 0.25 * np.cos(2 * t)) * np.cos(t), 0.7 * np.sin(t) + 0.15])
    return PolylineCurve(a, closed=True), PolylineCurve(b, closed=True)
