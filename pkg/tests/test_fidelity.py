import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varmatch import fidelity
from varmatch.fidelity import (
    FidelityConfig,
    grad_fidelity_normalized,
    grad_fidelity_pushforward,
    inner_product,
    pushforward_varifold,
    squared_distance,
)
from varmatch.kernels import OrientationKernel, SpatialKernel
from varmatch.varifold import DiscreteVarifold, VarifoldError, rigid_transform

from .helpers import random_rotation, random_varifold, unit_rows

FAMILIES = ["linear", "binet", "unoriented-gaussian", "oriented-gaussian"]


def cfg_for(family, sigma=0.8, sigma_s=0.9):
    return FidelityConfig(SpatialKernel(sigma), OrientationKernel(family, sigma_s))


def naive_inner(cfg, mu, nu):
    total = 0.0
    for xi, di, ri in zip(mu.x, mu.d, mu.r):
        for yj, ej, sj in zip(nu.x, nu.d, nu.r):
            rho = np.exp(-np.sum((xi - yj) ** 2) / cfg.spatial.sigma**2)
            t = float(np.dot(di, ej))
            fam = cfg.orientation.family
            c = 2.0 / cfg.orientation.sigma_s**2
            gam = {
                "linear": t,
                "binet": t * t,
                "unoriented-gaussian": np.exp(-c * (1 - t * t)),
                "oriented-gaussian": np.exp(-c * (1 - t)),
            }[fam]
            total += ri * sj * rho * gam
    return total


@pytest.mark.parametrize("family", FAMILIES)
def test_inner_product_matches_naive_loop(family):
    rng = np.random.default_rng(3)
    mu, nu = random_varifold(rng, 5, 2), random_varifold(rng, 5, 2)
    cfg = cfg_for(family)
    assert inner_product(cfg, mu, nu) == pytest.approx(naive_inner(cfg, mu, nu), rel=1e-13)


def test_identical_varifolds_are_at_distance_zero():
    mu = random_varifold(np.random.default_rng(0), 7, 3)
    assert squared_distance(cfg_for("oriented-gaussian"), mu, mu) == 0.0


def test_dimension_mismatch():
    rng = np.random.default_rng(0)
    with pytest.raises(VarifoldError):
        inner_product(cfg_for("linear"), random_varifold(rng, 2, 2), random_varifold(rng, 2, 3))


def test_negative_distance_is_reported(monkeypatch):
    values = iter([1.0, 1.0, 2.0])
    monkeypatch.setattr(fidelity, "cross_arrays", lambda *a: next(values))
    mu = random_varifold(np.random.default_rng(0), 2, 2)
    with pytest.raises(ArithmeticError):
        squared_distance(cfg_for("linear"), mu, mu)


# ---------------------------------------------------------------- metric regimes


def single(x, d, r=1.0):
    return DiscreteVarifold([x], [d], [r])


@pytest.mark.parametrize("family", ["unoriented-gaussian", "binet"])
def test_even_kernels_identify_flipped_diracs(family):
    d = np.array([0.6, 0.8])
    assert squared_distance(cfg_for(family), single([1, 2], d), single([1, 2], -d)) < 1e-12


def test_binet_identifies_orthonormal_pairs():
    rng = np.random.default_rng(5)
    for _ in range(10):
        th = rng.uniform(0, np.pi)
        phi = rng.uniform(0, np.pi)
        x = rng.normal(size=2)
        a = DiscreteVarifold([x, x], [[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]])
        b = DiscreteVarifold([x, x], [[np.cos(phi), np.sin(phi)], [-np.sin(phi), np.cos(phi)]])
        assert squared_distance(cfg_for("binet"), a, b) < 1e-12


def test_linear_kernel_cancels_opposite_directions():
    d = np.array([0.0, 1.0])
    mu = DiscreteVarifold([[0.5, 0.5], [0.5, 0.5]], [d, -d])
    empty = DiscreteVarifold(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))
    assert squared_distance(cfg_for("linear"), mu, empty) < 1e-12


def test_linear_kernel_sees_only_sums_at_a_point():
    x = [0.1, -0.3]
    a = DiscreteVarifold([x, x], [[1, 0], [0, 1]], [1.0, 1.0])
    u = np.array([[0.8, 0.6], [0.6, 0.8]])
    b = DiscreteVarifold([x, x], u / np.linalg.norm(u, axis=1)[:, None], np.linalg.norm(u, axis=1))
    # sums are (1, 1) and (1.4, 1.4): the metric reduces to |(0.4, 0.4)|^2
    assert squared_distance(cfg_for("linear"), a, b) == pytest.approx(0.32, rel=1e-12)
    c = DiscreteVarifold([x, x], [[1, 1], [1, -1]] / np.sqrt(2), [np.sqrt(2), np.sqrt(2)])
    d = DiscreteVarifold([x], [[1, 0]], [2.0])
    assert squared_distance(cfg_for("linear"), c, d) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_oriented_gaussian_separates_distinct_varifolds(seed):
    rng = np.random.default_rng(seed)
    mu = random_varifold(rng, int(rng.integers(1, 5)), 2)
    nu = random_varifold(rng, int(rng.integers(1, 5)), 2)
    assert squared_distance(cfg_for("oriented-gaussian"), mu, nu) > 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(FAMILIES), st.sampled_from([2, 3]))
def test_rigid_invariance(seed, family, n):
    rng = np.random.default_rng(seed)
    mu, nu = random_varifold(rng, 5, n), random_varifold(rng, 4, n)
    R, h = random_rotation(rng, n), rng.normal(size=n)
    cfg = cfg_for(family)
    a = squared_distance(cfg, mu, nu)
    b = squared_distance(cfg, rigid_transform(mu, R, h), rigid_transform(nu, R, h))
    assert b == pytest.approx(a, rel=1e-10, abs=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_varifold(rng, 6, 2), random_varifold(rng, 5, 2)
    cfg = cfg_for("unoriented-gaussian")
    a = squared_distance(cfg, mu, nu)
    b = squared_distance(cfg, mu.permuted(rng.permutation(6)), nu.permuted(rng.permutation(5)))
    assert b == pytest.approx(a, rel=1e-12, abs=1e-15)


# ---------------------------------------------------------------- gradients


def _fd_normalized(cfg, mu, nu, eps=1e-6):
    gx = np.zeros_like(mu.x)
    gd = np.zeros_like(mu.d)
    f = lambda x, d: fidelity.distance_arrays(cfg, x, d, mu.r, nu.x, nu.d, nu.r)  # noqa: E731
    for i in np.ndindex(mu.x.shape):
        for arr, out in ((0, gx), (1, gd)):
            a = [mu.x.copy(), mu.d.copy()]
            a[arr][i] += eps
            fp = f(*a)
            a[arr][i] -= 2 * eps
            out[i] = (fp - f(*a)) / (2 * eps)
    return gx, gd


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("n", [2, 3])
def test_normalized_gradient_matches_finite_differences(family, n):
    rng = np.random.default_rng(11 + n)
    mu, nu = random_varifold(rng, 4, n, 0.6), random_varifold(rng, 3, n, 0.6)
    cfg = cfg_for(family)
    gx, gd = grad_fidelity_normalized(cfg, mu, nu)
    fx, fdd = _fd_normalized(cfg, mu, nu)
    scale = max(np.abs(fx).max(), np.abs(fdd).max())
    assert np.abs(gx - fx).max() <= 1e-6 * scale
    assert np.abs(gd - fdd).max() <= 1e-6 * scale


@pytest.mark.parametrize("family", FAMILIES)
def test_pushforward_gradient_matches_finite_differences(family):
    rng = np.random.default_rng(21)
    P, n = 4, 2
    x = 0.6 * rng.normal(size=(P, n))
    u = unit_rows(rng, P, n) * rng.uniform(0.5, 1.5, (P, 1))
    nu = random_varifold(rng, 3, n, 0.6)
    cfg = cfg_for(family)
    gx, gu = grad_fidelity_pushforward(cfg, (x, u), nu)

    def g(x, u):
        return squared_distance(cfg, pushforward_varifold(x, u), nu)

    eps = 1e-6
    fx, fu = np.zeros_like(x), np.zeros_like(u)
    for i in np.ndindex(x.shape):
        for src, out in ((0, fx), (1, fu)):
            a = [x.copy(), u.copy()]
            a[src][i] += eps
            gp = g(*a)
            a[src][i] -= 2 * eps
            out[i] = (gp - g(*a)) / (2 * eps)
    scale = max(np.abs(fx).max(), np.abs(fu).max())
    assert np.abs(gx - fx).max() <= 1e-6 * scale
    assert np.abs(gu - fu).max() <= 1e-6 * scale
    # the list-of-pairs input form gives the same result
    gx2, gu2 = grad_fidelity_pushforward(cfg, list(zip(x, u)), nu)
    np.testing.assert_array_equal(gx, gx2)
    np.testing.assert_array_equal(gu, gu2)


def test_translation_gradient_points_back():
    rng = np.random.default_rng(2)
    mu = random_varifold(rng, 6, 2, 0.5)
    shift = np.array([0.03, -0.02])
    nu = rigid_transform(mu, np.eye(2), shift)
    gx, _ = grad_fidelity_normalized(cfg_for("oriented-gaussian"), mu, nu)
    total = gx.sum(axis=0)
    assert np.dot(total, shift) < 0
    cos = np.dot(total, -shift) / (np.linalg.norm(total) * np.linalg.norm(shift))
    assert cos > 0.9


def test_gradient_vanishes_at_perfect_match():
    mu = random_varifold(np.random.default_rng(4), 5, 2)
    gx, gd = grad_fidelity_normalized(cfg_for("oriented-gaussian"), mu, mu)
    assert np.abs(gx).max() < 1e-12 and np.abs(gd).max() < 1e-12


def test_pushforward_gradient_rejects_collapsed_mass():
    nu = random_varifold(np.random.default_rng(0), 2, 2)
    with pytest.raises(ArithmeticError):
        grad_fidelity_pushforward(cfg_for("linear"), (np.zeros((1, 2)), np.zeros((1, 2))), nu)
