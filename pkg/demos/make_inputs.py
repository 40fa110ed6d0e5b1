"""Write the demo input files into demos/data and the run configs into demos/configs.

    python3 demos/make_inputs.py

Everything is generated from varmatch.synthetic, so rerunning reproduces the
same bytes.
"""

import json
from pathlib import Path

from varmatch import io
from varmatch.synthetic import (
    ellipse_curve_pair,
    phantom_pair,
    phantom_threshold,
    two_dirac_pairs,
    two_dirac_sum_pairs,
)

HERE = Path(__file__).resolve().parent
DATA = HERE / "data"
CONFIGS = HERE / "configs"

PHANTOM_SIZE = 64

TWO_DIRAC = {"sigma": 0.5, "sigma_v": 0.5, "steps": 20, "max_iter": 200, "init_step": 0.1}

RUNS = {
    # exact match of a flipped pair is only possible by rotating the directions
    "two_dirac_oriented": dict(
        TWO_DIRAC | {"max_iter": 20},
        template="two_dirac_template.json", target="two_dirac_target_flipped.json",
        gamma="oriented-gaussian", sigma_s=2.0, **{"lambda": 100.0},
    ),
    # the same flipped target, matched without turning the directions around
    "two_dirac_unoriented": dict(
        TWO_DIRAC, template="two_dirac_template.json", target="two_dirac_target_flipped.json",
        gamma="unoriented-gaussian", sigma_s=1.0, **{"lambda": 10.0},
    ),
    "two_dirac_binet": dict(
        TWO_DIRAC, template="two_dirac_template.json", target="two_dirac_target_flipped.json",
        gamma="binet", **{"lambda": 10.0},
    ),
    # the linear kernel only sees the sum of the two vectors
    "two_dirac_linear_pushforward": dict(
        TWO_DIRAC, template="two_dirac_template.json", target="two_dirac_sum_target.json",
        gamma="linear", action="pushforward", **{"lambda": 10.0},
    ),
    "ellipse_curves": dict(
        template="ellipse_a.json", target="ellipse_b.json", gamma="oriented-gaussian",
        sigma=0.3, sigma_s=1.0, sigma_v=0.4, steps=10, max_iter=60, **{"lambda": 10.0},
    ),
    "phantom": dict(
        template="phantom_template.pgm", target="phantom_target_inverted.pgm",
        gamma="unoriented-gaussian", action="normalized", sigma=0.05, sigma_s=0.5,
        sigma_v=0.12, steps=5, max_iter=20, pixel_spacing=1.0 / PHANTOM_SIZE,
        **{"lambda": 1.0},
    ),
}


def write_data():
    DATA.mkdir(exist_ok=True)
    template, target = two_dirac_pairs()
    io.save_varifold(template, DATA / "two_dirac_template.json")
    io.save_varifold(target, DATA / "two_dirac_target.json")
    io.save_varifold(two_dirac_pairs(flip_target=True)[1], DATA / "two_dirac_target_flipped.json")
    io.save_varifold(two_dirac_sum_pairs()[1], DATA / "two_dirac_sum_target.json")
    a, b = ellipse_curve_pair()
    io.save_curve(a, DATA / "ellipse_a.json")
    io.save_curve(b, DATA / "ellipse_b.json")
    img_a, img_b = phantom_pair(PHANTOM_SIZE)
    io.save_pgm(img_a, DATA / "phantom_template.pgm")
    io.save_pgm(img_b, DATA / "phantom_target_inverted.pgm")
    # threshold from the image as stored, so the CLI sees the same pixels
    stored = io.load_pgm(DATA / "phantom_template.pgm", 1.0 / PHANTOM_SIZE)
    return phantom_threshold(stored)


def write_configs(phantom_grad_threshold):
    CONFIGS.mkdir(exist_ok=True)
    for name, run in RUNS.items():
        cfg = dict(run)
        cfg["template"] = f"../data/{run['template']}"
        cfg["target"] = f"../data/{run['target']}"
        cfg["out"] = f"../runs/{name}"
        if name == "phantom":
            cfg["grad_threshold"] = round(phantom_grad_threshold, 6)
        with open(CONFIGS / f"{name}.json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(cfg, indent=1) + "\n")


if __name__ == "__main__":
    write_configs(write_data())
    print(f"wrote {DATA} and {CONFIGS}")
