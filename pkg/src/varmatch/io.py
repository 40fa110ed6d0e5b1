"""File formats: varifold/curve/momenta JSON, OBJ meshes, PGM images, trajectories, results.

Floats are written with Python's shortest round-trip ``repr`` so that equal
arrays always serialize to identical bytes.
"""

import csv
import io as _io
import json
import re

import numpy as np

from .dynamics import NormalizedState, PushforwardFullState, PushforwardReducedState
from .varifold import DiscreteVarifold, GrayImage, PolylineCurve, TriangleMesh, VarifoldError

UNIT_LOAD_TOL = 1e-6


class FormatError(ValueError):
    """Malformed input file; the message carries a line number or byte offset."""


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def dump_json(obj, path):
    text = json.dumps(obj, indent=1, sort_keys=False, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


# ---------------------------------------------------------------- varifolds


def varifold_to_dict(mu):
    return {
        "dimension": mu.dimension,
        "diracs": [
            {"x": xi, "d": di, "r": ri}
            for xi, di, ri in zip(_floats(mu.x), _floats(mu.d), _floats(mu.r))
        ],
    }


def varifold_from_dict(obj, source="<varifold>"):
    try:
        n = int(obj["dimension"])
        diracs = obj["diracs"]
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{source}: expected keys 'dimension' and 'diracs'") from None
    if n not in (2, 3):
        raise FormatError(f"{source}: dimension must be 2 or 3, got {n}")
    x = np.zeros((len(diracs), n))
    d = np.zeros((len(diracs), n))
    r = np.zeros(len(diracs))
    for i, item in enumerate(diracs):
        try:
            x[i] = item["x"]
            d[i] = item["d"]
            r[i] = item["r"]
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"{source}: dirac {i} needs 'x', 'd' (length {n}) and 'r'") from None
    norms = np.linalg.norm(d, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_LOAD_TOL)
    if bad.size:
        i = int(bad[0])
        raise FormatError(f"{source}: dirac {i} direction has norm {norms[i]:.9g}")
    try:
        return DiscreteVarifold(x, d / norms[:, None], r)
    except VarifoldError as exc:
        raise FormatError(f"{source}: {exc}") from None


def save_varifold(mu, path):
    dump_json(varifold_to_dict(mu), path)


def load_varifold(path):
    return varifold_from_dict(_load_json(path), str(path))


# ---------------------------------------------------------------- curves


def load_curve(path):
    obj = _load_json(path)
    try:
        verts = np.asarray(obj["vertices"], dtype=float)
        closed = obj["closed"]
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{path}: expected 'vertices' (list of points) and 'closed'") from None
    if not isinstance(closed, bool):
        raise FormatError(f"{path}: 'closed' must be true or false")
    try:
        return PolylineCurve(verts, closed)
    except VarifoldError as exc:
        raise FormatError(f"{path}: {exc}") from None


def save_curve(curve, path):
    dump_json({"vertices": _floats(curve.vertices), "closed": bool(curve.closed)}, path)


# ---------------------------------------------------------------- OBJ


def parse_obj(text, source="<obj>"):
    """Vertices and triangular faces from OBJ text; other statements are ignored."""
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise FormatError(f"{source}: line {lineno}: vertex needs 3 coordinates")
            try:
                verts.append([float(t) for t in rest[:3]])
            except ValueError:
                raise FormatError(f"{source}: line {lineno}: bad vertex coordinate") from None
        elif tag == "f":
            if len(rest) != 3:
                raise FormatError(
                    f"{source}: line {lineno}: only triangles are supported ({len(rest)} indices)"
                )
            idx = []
            for tok in rest:
                try:
                    k = int(tok.split("/", 1)[0])
                except ValueError:
                    raise FormatError(f"{source}: line {lineno}: bad face index {tok!r}") from None
                if k == 0 or k > len(verts) or -k > len(verts):
                    raise FormatError(f"{source}: line {lineno}: face index {k} out of range")
                idx.append(k - 1 if k > 0 else len(verts) + k)
            faces.append(idx)
    if not faces:
        raise FormatError(f"{source}: no faces")
    return TriangleMesh(np.array(verts, dtype=float), np.array(faces, dtype=int))


def load_obj(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_obj(fh.read(), str(path))


def save_obj(mesh, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in mesh.vertices:
            fh.write("v " + " ".join(repr(float(c)) for c in v) + "\n")
        for f in mesh.faces:
            fh.write("f " + " ".join(str(int(k) + 1) for k in f) + "\n")


# ---------------------------------------------------------------- PGM

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def parse_pgm(data, source="<pgm>", pixel_spacing=1.0):
    """Decode a binary (P5) or plain (P2) PGM byte string into a ``GrayImage``.

    Intensities are divided by maxval, so images read in [0, 1].
    """
    pos = 0
    header = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise FormatError(f"{source}: byte {pos}: truncated header")
        header.append((m.group(1), m.start(1)))
        pos = m.end(1)
    magic = header[0][0]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{source}: byte 0: unsupported magic {magic!r} (need P2 or P5)")
    vals = []
    for tok, off in header[1:]:
        try:
            vals.append(int(tok))
        except ValueError:
            raise FormatError(f"{source}: byte {off}: expected an integer, got {tok!r}") from None
    w, h, maxval = vals
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"{source}: byte {header[1][1]}: bad size {w}x{h} or maxval {maxval}")
    count = w * h
    if magic == b"P5":
        pos += 1  # single whitespace byte before the raster
        width = 1 if maxval < 256 else 2
        need = count * width
        if len(data) - pos < need:
            raise FormatError(
                f"{source}: byte {len(data)}: raster truncated ({len(data) - pos} of {need} bytes)"
            )
        dtype = np.uint8 if width == 1 else np.dtype(">u2")
        px = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(float)
    else:
        body = data[pos:]
        tokens = re.sub(rb"#[^\n]*", b"", body).split()
        if len(tokens) < count:
            line = data.count(b"\n") + 1
            raise FormatError(f"{source}: line {line}: expected {count} samples, found {len(tokens)}")
        try:
            px = np.array([int(t) for t in tokens[:count]], dtype=float)
        except ValueError:
            bad = next(t for t in tokens[:count] if not t.isdigit())
            off = pos + body.find(bad)
            line = data.count(b"\n", 0, off) + 1
            raise FormatError(f"{source}: line {line}: bad sample {bad!r}") from None
    if np.any(px > maxval):
        raise FormatError(f"{source}: sample exceeds maxval {maxval}")
    return GrayImage(w, h, px / maxval, pixel_spacing)


def load_pgm(path, pixel_spacing=1.0):
    with open(path, "rb") as fh:
        return parse_pgm(fh.read(), str(path), pixel_spacing)


def save_pgm(img, path, maxval=65535, binary=True):
    """Write ``img`` (values in [0, 1]) quantized to ``maxval``."""
    q = np.rint(np.clip(img.as_array(), 0.0, 1.0) * maxval).astype(np.int64)
    head = f"{'P5' if binary else 'P2'}\n{img.width} {img.height}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(head)
        if binary:
            fh.write(q.astype(np.uint8 if maxval < 256 else ">u2").tobytes())
        else:
            for row in q:
                fh.write((" ".join(str(v) for v in row) + "\n").encode())


# ---------------------------------------------------------------- momenta


def save_momenta(p0, path):
    p0 = np.asarray(p0, dtype=float)
    dump_json({"p1": _floats(p0[0]), "p2": _floats(p0[1])}, path)


def load_momenta(path, shape=None):
    obj = _load_json(path)
    try:
        p = np.stack([np.asarray(obj["p1"], dtype=float), np.asarray(obj["p2"], dtype=float)])
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{path}: expected arrays 'p1' and 'p2' of equal shape") from None
    if shape is not None and p.shape != tuple(shape):
        raise FormatError(
            f"{path}: momenta have {p.shape[1]} rows of length {p.shape[2] if p.ndim == 3 else '?'}, "
            f"expected {shape[1]} of length {shape[2]}"
        )
    return p


# ---------------------------------------------------------------- trajectories


def _state_fields(state):
    if isinstance(state, NormalizedState):
        return {"x": state.x, "d": state.d, "r": state.r, "p1": state.p1, "p2": state.p2}
    if isinstance(state, PushforwardReducedState):
        return {"x": state.x, "u": state.u, "p1": state.p1, "p2": state.p2}
    if isinstance(state, PushforwardFullState):
        return {
            "x": state.x, "d": state.d, "r": state.r,
            "p1": state.p1, "p2": state.p2, "p3": state.p3,
        }
    raise TypeError(f"unknown state type {type(state).__name__}")


def trajectory_to_list(traj):
    out = []
    for t, s, H in zip(traj.times, traj.states, traj.hamiltonian_values):
        entry = {"t": float(t), "hamiltonian": float(H)}
        entry.update({k: _floats(v) for k, v in _state_fields(s).items()})
        out.append(entry)
    return out


def save_trajectory_json(traj, path):
    dump_json(trajectory_to_list(traj), path)


def trajectory_csv(traj):
    """Per-particle tracks, one row per (particle, node)."""
    first = _state_fields(traj.states[0])
    n = first["x"].shape[1]
    cols = ["particle", "t", "hamiltonian"]
    for key, arr in first.items():
        cols += [key] if arr.ndim == 1 else [f"{key}{c}" for c in range(n)]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    fields = [_state_fields(s) for s in traj.states]
    P = first["x"].shape[0]
    for i in range(P):
        for t, H, f in zip(traj.times, traj.hamiltonian_values, fields):
            row = [i, repr(float(t)), repr(float(H))]
            for arr in f.values():
                row += [repr(float(arr[i]))] if arr.ndim == 1 else [repr(float(v)) for v in arr[i]]
            w.writerow(row)
    return buf.getvalue()


def save_trajectory_csv(traj, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trajectory_csv(traj))


# ---------------------------------------------------------------- results


def result_to_dict(result, config=None):
    return {
        "status": result.status,
        "iterations": result.iterations,
        "p1": _floats(result.p0[0]),
        "p2": _floats(result.p0[1]),
        "energy_history": [
            {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in rec.items()}
            for rec in result.energy_history
        ],
        "deformed": varifold_to_dict(result.deformed),
        "config": config if config is not None else {},
    }


def save_result(result, path, config=None):
    dump_json(result_to_dict(result, config), path)


def energy_csv(result):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "E", "H_r", "g", "step_spatial", "step_directional", "accepted"])
    for rec in result.energy_history:
        w.writerow([
            rec["iteration"], repr(float(rec["energy"])), repr(float(rec["regularization"])),
            repr(float(rec["fidelity"])), repr(float(rec["step_spatial"])),
            repr(float(rec["step_directional"])), int(bool(rec["accepted"])),
        ])
    return buf.getvalue()


def save_energy_csv(result, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(energy_csv(result))
