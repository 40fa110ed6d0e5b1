"""Command-line driver: ``varmatch {convert,distance,shoot,register}``.

Exit codes: 0 success, 1 input or configuration error, 2 the optimizer found
no descent direction, 3 numerical abort.
"""

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import io as vio
from .dynamics import ActionModel, initial_state, integrate, state_to_varifold
from .fidelity import FidelityConfig, cross_arrays, squared_distance
from .kernels import DeformationKernel, OrientationKernel, SpatialKernel
from .optimizer import RegistrationProblem, register
from .svg import overlay_svg, trajectory_svg, write_svg
from .varifold import VarifoldError, curve_to_varifold, image_to_varifold, mesh_to_varifold

EXIT_OK, EXIT_INPUT, EXIT_NO_DESCENT, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a registration run needs. JSON key ``lambda`` maps to ``lam``."""

    template: str = ""
    target: str = ""
    action: str = "normalized"
    transport: str = "tangent"
    gamma: str = "oriented-gaussian"
    sigma: float = 1.0
    sigma_s: float = 1.0
    sigma_v: float = 1.0
    lam: float = 1.0
    steps: int = 20
    max_iter: int = 500
    tol_grad: float = 1e-6
    tol_energy: float = 1e-8
    init_step: float = 0.1
    grad_threshold: float = 1e-8
    pixel_spacing: float = 1.0
    out: str = "."
    svg: bool = True
    grid_nodes: int = 20

    def to_json(self):
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def _json_key(name):
    return "lambda" if name == "lam" else name


def _coerce(name, kind, value):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{_json_key(name)}: expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{_json_key(name)}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{_json_key(name)}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{_json_key(name)}: expected a string, got {value!r}")
    return value


def config_from_dict(obj, base_dir=None):
    """Validated ``RunConfig``; unknown keys and wrong types are rejected."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    fields = {_json_key(f.name): f for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(obj) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for key, value in obj.items():
        f = fields[key]
        values[f.name] = _coerce(f.name, f.type, value)
    cfg = RunConfig(**values)
    if base_dir:
        for name in ("template", "target", "out"):
            p = getattr(cfg, name)
            if p and not os.path.isabs(p):
                setattr(cfg, name, os.path.normpath(os.path.join(base_dir, p)))
    return cfg


def validate_config(cfg):
    if not cfg.template or not cfg.target:
        raise ConfigError("template and target inputs are required")
    for name in ("sigma", "sigma_s", "sigma_v", "lam", "init_step", "pixel_spacing"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{_json_key(name)} must be positive")
    if cfg.steps < 1 or cfg.max_iter < 0 or cfg.grid_nodes < 0:
        raise ConfigError("steps must be >= 1; max_iter and grid_nodes >= 0")
    try:
        ActionModel(cfg.action, cfg.transport)
        OrientationKernel(cfg.gamma, cfg.sigma_s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- inputs


def load_shape(path, kind=None, grad_threshold=1e-8, pixel_spacing=1.0):
    """Read a varifold from a varifold/curve JSON, an OBJ mesh or a PGM image."""
    ext = os.path.splitext(path)[1].lower()
    if kind is None:
        kind = {".obj": "mesh", ".pgm": "image"}.get(ext)
    if kind == "mesh":
        return mesh_to_varifold(vio.load_obj(path))
    if kind == "image":
        return image_to_varifold(vio.load_pgm(path, pixel_spacing), grad_threshold)
    if kind == "curve":
        return curve_to_varifold(vio.load_curve(path))
    if kind in (None, "varifold"):
        with open(path, "r", encoding="utf-8") as fh:
            head = fh.read()
        if '"vertices"' in head and '"diracs"' not in head:
            return curve_to_varifold(vio.load_curve(path))
        return vio.load_varifold(path)
    raise ConfigError(f"unknown input kind {kind!r}")


def _fidelity(args):
    return FidelityConfig(SpatialKernel(args.sigma), OrientationKernel(args.gamma, args.sigma_s))


# ---------------------------------------------------------------- commands


def cmd_convert(args):
    mu = load_shape(args.input, args.kind, args.grad_threshold, args.pixel_spacing)
    if args.out:
        vio.save_varifold(mu, args.out)
    print(f"diracs {len(mu)}")
    print(f"total_mass {mu.total_mass:.12g}")
    return EXIT_OK


def cmd_distance(args):
    a, b = vio.load_varifold(args.a), vio.load_varifold(args.b)
    if a.dimension != b.dimension:
        raise VarifoldError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    cfg = _fidelity(args)
    aa = cross_arrays(cfg, a.x, a.d, a.r, a.x, a.d, a.r)
    ab = cross_arrays(cfg, a.x, a.d, a.r, b.x, b.d, b.r)
    bb = cross_arrays(cfg, b.x, b.d, b.r, b.x, b.d, b.r)
    print(f"<a,a> {aa:.12g}")
    print(f"<a,b> {ab:.12g}")
    print(f"<b,b> {bb:.12g}")
    print(f"squared_distance {squared_distance(cfg, a, b):.12g}")
    return EXIT_OK


def cmd_shoot(args):
    mu = vio.load_varifold(args.varifold)
    p0 = vio.load_momenta(args.momenta, (2, len(mu), mu.dimension))
    model = ActionModel(args.action, args.transport)
    K = DeformationKernel(args.sigma_v)
    traj = integrate(model, initial_state(model, mu, p0[0], p0[1]), K, args.steps)
    if args.out:
        vio.save_trajectory_json(traj, args.out)
    if args.csv:
        vio.save_trajectory_csv(traj, args.csv)
    if args.svg:
        write_svg(trajectory_svg(model, traj, K, grid_nodes=args.grid_nodes), args.svg)
    H = traj.hamiltonian_values
    drift = float(np.max(np.abs(H - H[0]))) / max(abs(float(H[0])), 1e-300) if H[0] != 0 else 0.0
    final = state_to_varifold(traj.final)
    print(f"particles {len(mu)}")
    print(f"steps {args.steps}")
    print(f"H_r {float(H[0]):.12g}")
    print(f"H_r_drift {drift:.3e}")
    print(f"final_mass {final.total_mass:.12g}")
    return EXIT_OK


def build_problem(cfg):
    template = load_shape(cfg.template, None, cfg.grad_threshold, cfg.pixel_spacing)
    target = load_shape(cfg.target, None, cfg.grad_threshold, cfg.pixel_spacing)
    return RegistrationProblem(
        template=template,
        target=target,
        model=ActionModel(cfg.action, cfg.transport),
        fidelity=FidelityConfig(SpatialKernel(cfg.sigma), OrientationKernel(cfg.gamma, cfg.sigma_s)),
        deformation=DeformationKernel(cfg.sigma_v),
        lam=cfg.lam,
        steps=cfg.steps,
        max_iter=cfg.max_iter,
        tol_grad=cfg.tol_grad,
        tol_energy=cfg.tol_energy,
        init_step=cfg.init_step,
    )


def run_registration(cfg):
    """Run one configured registration and write its artifacts into ``cfg.out``."""
    validate_config(cfg)
    prob = build_problem(cfg)
    result = register(prob)
    os.makedirs(cfg.out, exist_ok=True)
    echo = cfg.to_json()
    vio.save_result(result, os.path.join(cfg.out, "result.json"), echo)
    vio.save_trajectory_json(result.final_trajectory, os.path.join(cfg.out, "trajectory.json"))
    vio.save_trajectory_csv(result.final_trajectory, os.path.join(cfg.out, "tracks.csv"))
    vio.save_energy_csv(result, os.path.join(cfg.out, "energy.csv"))
    if cfg.svg and prob.template.dimension == 2:
        write_svg(
            overlay_svg(prob.template, result.deformed, prob.target),
            os.path.join(cfg.out, "overlay.svg"),
        )
        write_svg(
            trajectory_svg(
                prob.model, result.final_trajectory, prob.deformation,
                target=prob.target, grid_nodes=cfg.grid_nodes,
            ),
            os.path.join(cfg.out, "geodesic.svg"),
        )
    return prob, result


def cmd_register(args):
    obj = {}
    base = None
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: line {exc.lineno}: {exc.msg}") from None
        base = os.path.dirname(os.path.abspath(args.config))
    cfg = config_from_dict(obj, base)
    for f in dataclasses.fields(RunConfig):
        if f.name in vars(args) and getattr(args, f.name) is not None:
            setattr(cfg, f.name, getattr(args, f.name))
    prob, result = run_registration(cfg)
    first, last = result.energy_history[0], result.energy_history[-1]
    print(f"status {result.status}")
    print(f"iterations {result.iterations}")
    print(f"energy {last['energy']:.12g}")
    print(f"fidelity_initial {first['fidelity']:.12g}")
    print(f"fidelity_final {last['fidelity']:.12g}")
    return EXIT_NO_DESCENT if result.status == "no-descent" else EXIT_OK


# ---------------------------------------------------------------- parser


def _model_flags(p, defaults=True):
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--action", choices=("normalized", "pushforward"), default=d("normalized"))
    p.add_argument("--transport", choices=("tangent", "normal"), default=d("tangent"))
    p.add_argument("--sigma-v", dest="sigma_v", type=float, default=d(1.0))
    p.add_argument("--steps", type=int, default=d(20))


def _metric_flags(p, defaults=True):
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument(
        "--gamma",
        choices=("linear", "binet", "unoriented-gaussian", "oriented-gaussian"),
        default=d("oriented-gaussian"),
    )
    p.add_argument("--sigma", type=float, default=d(1.0))
    p.add_argument("--sigma-s", dest="sigma_s", type=float, default=d(1.0))


def build_parser():
    ap = argparse.ArgumentParser(prog="varmatch", description="Diffeomorphic varifold registration.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="curve/mesh/image to varifold JSON")
    p.add_argument("input")
    p.add_argument("--kind", choices=("curve", "mesh", "image"), required=True)
    p.add_argument("--out", "-o")
    p.add_argument("--grad-threshold", dest="grad_threshold", type=float, default=1e-8)
    p.add_argument("--pixel-spacing", dest="pixel_spacing", type=float, default=1.0)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("distance", help="squared kernel distance between two varifolds")
    p.add_argument("a")
    p.add_argument("b")
    _metric_flags(p)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("shoot", help="integrate a geodesic from a varifold and momenta")
    p.add_argument("varifold")
    p.add_argument("momenta")
    _model_flags(p)
    p.add_argument("--out", "-o", help="trajectory JSON")
    p.add_argument("--csv", help="per-particle track CSV")
    p.add_argument("--svg", help="figure path (2D only)")
    p.add_argument("--grid-nodes", dest="grid_nodes", type=int, default=20)
    p.set_defaults(func=cmd_shoot)

    p = sub.add_parser("register", help="run a registration from a JSON config")
    p.add_argument("config", nargs="?")
    _model_flags(p, defaults=False)
    _metric_flags(p, defaults=False)
    p.add_argument("--template")
    p.add_argument("--target")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol-grad", dest="tol_grad", type=float)
    p.add_argument("--tol-energy", dest="tol_energy", type=float)
    p.add_argument("--init-step", dest="init_step", type=float)
    p.add_argument("--grad-threshold", dest="grad_threshold", type=float)
    p.add_argument("--pixel-spacing", dest="pixel_spacing", type=float)
    p.add_argument("--grid-nodes", dest="grid_nodes", type=int)
    p.add_argument("--out", "-o", help="output directory")
    p.add_argument("--svg", dest="svg", action="store_true", default=None)
    p.add_argument("--no-svg", dest="svg", action="store_false")
    p.set_defaults(func=cmd_register)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, vio.FormatError, VarifoldError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
