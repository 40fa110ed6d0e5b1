"""Plain SVG figures for 2D trajectories and registration overlays."""

import numpy as np

from .dynamics import integrate, state_varifold_arrays, with_passive_points

CANVAS = 600.0
MARGIN = 30.0
COLORS = {"template": "#1f77b4", "deformed": "#d62728", "target": "#2ca02c", "track": "#555555"}


class _Frame:
    """Affine map from world coordinates to the canvas, y pointing up."""

    def __init__(self, points, pad=0.1):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = max(float(np.max(hi - lo)), 1e-9)
        lo = lo - pad * span
        span *= 1 + 2 * pad
        self.lo, self.scale = lo, (CANVAS - 2 * MARGIN) / span
        self.glyph = 0.04 * span

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return MARGIN + (p[..., 0] - self.lo[0]) * self.scale, CANVAS - MARGIN - (p[..., 1] - self.lo[1]) * self.scale


def _fmt(v):
    return f"{float(v):.3f}"


def _polyline(frame, pts, color, width=1.0, opacity=1.0):
    xs, ys = frame(pts)
    coords = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys))
    return (
        f'<polyline points="{coords}" fill="none" stroke="{color}" '
        f'stroke-width="{width}" stroke-opacity="{opacity}"/>'
    )


def _glyphs(frame, x, d, r, color, scale=1.0):
    """Arrow-less direction segments centered at ``x``, length growing with weight."""
    rmax = float(np.max(r)) if len(r) else 1.0
    out = []
    for xi, di, ri in zip(x, d, r):
        half = 0.5 * frame.glyph * scale * (0.5 + 0.5 * ri / rmax)
        a, b = frame(xi - half * di), frame(xi + half * di)
        out.append(
            f'<line x1="{_fmt(a[0])}" y1="{_fmt(a[1])}" x2="{_fmt(b[0])}" y2="{_fmt(b[1])}" '
            f'stroke="{color}" stroke-width="2"/>'
            f'<circle cx="{_fmt(b[0])}" cy="{_fmt(b[1])}" r="2" fill="{color}"/>'
        )
    return out


def _document(body, title):
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(CANVAS)}" height="{int(CANVAS)}" '
        f'viewBox="0 0 {int(CANVAS)} {int(CANVAS)}">\n<title>{title}</title>\n'
        f'<rect width="100%" height="100%" fill="white"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _grid_lines(model, traj, K, frame_pts, nodes):
    lo, hi = frame_pts.min(axis=0), frame_pts.max(axis=0)
    span = hi - lo
    span = np.where(span > 0, span, 1.0)
    lo, hi = lo - 0.15 * span, hi + 0.15 * span
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], nodes), np.linspace(lo[1], hi[1], nodes))
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    aug = with_passive_points(model, traj.states[0], pts)
    moved = integrate(model, aug, K, traj.steps).final.x[len(traj.states[0].x):]
    return moved.reshape(nodes, nodes, 2)


def trajectory_svg(model, traj, K, target=None, grid_nodes=20, title="geodesic"):
    """Tracks, direction glyphs at t = 0, 1/2, 1 and a flowed grid backdrop."""
    if traj.states[0].x.shape[1] != 2:
        raise ValueError("SVG rendering supports 2D data only")
    xs = np.stack([s.x for s in traj.states])
    pts = xs.reshape(-1, 2)
    if target is not None:
        pts = np.vstack([pts, target.x])
    frame = _Frame(pts)
    body = []
    if grid_nodes:
        g = _grid_lines(model, traj, K, pts, grid_nodes)
        body += [_polyline(frame, g[i], "#bbbbbb", 0.7) for i in range(grid_nodes)]
        body += [_polyline(frame, g[:, j], "#bbbbbb", 0.7) for j in range(grid_nodes)]
    body += [_polyline(frame, xs[:, i], COLORS["track"], 1.2) for i in range(xs.shape[1])]
    T = traj.steps
    for idx, color in ((0, COLORS["template"]), (T // 2, "#9467bd"), (T, COLORS["deformed"])):
        x, d, r = state_varifold_arrays(traj.states[idx])
        body += _glyphs(frame, x, d, r, color)
    if target is not None:
        body += _glyphs(frame, target.x, target.d, target.r, COLORS["target"])
    return _document(body, title)


def overlay_svg(template, deformed, target, title="registration"):
    """Template, deformed template and target glyphs on one canvas."""
    if template.dimension != 2:
        raise ValueError("SVG rendering supports 2D data only")
    frame = _Frame(np.vstack([template.x, deformed.x, target.x]))
    body = []
    for mu, key in ((template, "template"), (target, "target"), (deformed, "deformed")):
        body += _glyphs(frame, mu.x, mu.d, mu.r, COLORS[key])
    return _document(body, title)


def write_svg(text, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
