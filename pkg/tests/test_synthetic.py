import numpy as np

from varmatch.fidelity import FidelityConfig, squared_distance
from varmatch.kernels import OrientationKernel, SpatialKernel
from varmatch.synthetic import (
    ellipse_curve_pair,
    icosphere,
    multidirectional_pair,
    phantom_pair,
    phantom_threshold,
    two_dirac_pairs,
    two_dirac_sum_pairs,
    unflipped_target_directions,
)
from varmatch.varifold import curve_to_varifold, image_to_varifold, mesh_to_varifold


def test_icosphere_is_a_closed_unit_sphere():
    mesh = icosphere(2)
    np.testing.assert_allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0)
    # Euler characteristic of a sphere
    V, F = len(mesh.vertices), len(mesh.faces)
    assert V - 3 * F // 2 + F == 2
    assert np.all(np.sum(mesh_to_varifold(mesh).x * mesh_to_varifold(mesh).d, axis=1) > 0)


def test_flipped_two_dirac_target_is_invisible_to_unoriented_kernel():
    cfg = FidelityConfig(SpatialKernel(0.5), OrientationKernel("unoriented-gaussian", 1.0))
    _, plain = two_dirac_pairs()
    _, flipped = two_dirac_pairs(flip_target=True)
    assert squared_distance(cfg, plain, flipped) < 1e-12
    np.testing.assert_allclose(flipped.d, -unflipped_target_directions(), atol=1e-15)
    oriented = FidelityConfig(SpatialKernel(0.5), OrientationKernel("oriented-gaussian", 1.0))
    assert squared_distance(oriented, plain, flipped) > 0.1


def test_sum_pairs_differ_in_sum_and_individually():
    template, target = two_dirac_sum_pairs()
    sums = [np.sum(v.r[:, None] * v.d, axis=0) for v in (template, target)]
    np.testing.assert_allclose(sums, [[1, 1], [1.4, 1.4]])


def test_phantom_pair_has_inverted_contrast():
    a, b = phantom_pair(32)
    arr_a, arr_b = a.as_array(), b.as_array()
    assert arr_a.shape == arr_b.shape == (32, 32)
    # background is dark in the template and bright in the target
    assert arr_a[0, 0] < 0.01 and arr_b[0, 0] > 0.9 * arr_b.max()
    t = phantom_threshold(a)
    mu, nu = image_to_varifold(a, t), image_to_varifold(b, t)
    assert 0.8 < len(nu) / len(mu) < 1.25


def test_phantom_default_size_point_counts():
    a, b = phantom_pair()
    t = phantom_threshold(a)
    assert (len(image_to_varifold(a, t)), len(image_to_varifold(b, t))) == (329, 335)


def test_other_setups_are_valid_varifolds():
    tmpl, targ = multidirectional_pair(0)
    assert len(tmpl) == len(targ) and not tmpl.has_distinct_positions()
    a, b = ellipse_curve_pair()
    assert curve_to_varifold(a).total_mass < curve_to_varifold(b).total_mass
