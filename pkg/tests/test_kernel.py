import numpy as np
import pytest
import sympy as sp

from regularity.geometry import SphericalFunction, build_quadrature
from regularity.kernel import (
    KernelConfig,
    PN_and_perp,
    SourceData,
    annulus_norm,
    closed_form_coefficient,
    coefficient_table,
    even_harmonic_basis,
    gamma,
    grad_x_N,
    kernel_radii,
    neumann_N,
    perp_potential,
    prop1_check,
    projection_crosscheck,
    projection_residual,
    series_error_bound,
    series_N,
    source_from_spec,
    source_quadrature,
    truncation_bound,
    uniqueness_exponent_ok,
)
from shared.errors import (
    CoincidentPoints,
    HypothesisViolated,
    InvalidParams,
    OriginSingularity,
    QuadratureFailure,
    RadiiEqual,
    TruncationInsufficient,
)
from shared.types import KernelSpec, SourceFamily, SourceSpec

# --- Fixtures ---


@pytest.fixture(scope="module")
def cfg3():
    return KernelConfig(n=3)


@pytest.fixture(scope="module")
def quadrupole():
    return source_from_spec(SourceSpec(family=SourceFamily.QUADRUPOLE), 3)


@pytest.fixture(scope="module")
def quadrupole_sq(quadrupole):
    return source_quadrature(quadrupole, 3)


def radial(power):
    def evaluator(x):
        return np.linalg.norm(x, axis=1) ** power

    def gradient(x):
        rad = np.linalg.norm(x, axis=1, keepdims=True)
        return power * rad ** (power - 2) * x

    return SphericalFunction(evaluator, gradient)


# --- Tests: direct evaluation ---


def test_fundamental_solution_constants():
    assert gamma(3, [0.0, 0.0, 1.0]) == pytest.approx(-1.0 / (4.0 * np.pi))
    assert gamma(4, [0.0, 1.0, 0.0, 0.0]) == pytest.approx(-1.0 / (4.0 * np.pi**2))
    assert gamma(2, [1.0, 0.0]) == pytest.approx(0.0)
    with pytest.raises(OriginSingularity):
        gamma(3, [0.0, 0.0, 0.0])


def test_neumann_function_on_the_axis():
    value = neumann_N(3, [0.0, 0.0, 1.0], [0.0, 0.0, 2.0])
    assert value == pytest.approx(-1.0 / (3.0 * np.pi))


def test_neumann_function_is_symmetric(rng):
    x = rng.uniform(0.1, 1.0, size=(50, 3))
    y = rng.uniform(0.1, 1.0, size=(50, 3))
    assert np.allclose(neumann_N(3, x, y), neumann_N(3, y, x), rtol=1e-13)


def test_coincident_points():
    with pytest.raises(CoincidentPoints):
        neumann_N(3, [0.5, 0.0, 0.0], [0.5, 0.0, 0.0])
    with pytest.raises(CoincidentPoints):
        grad_x_N(3, [0.0, 0.0, -1.0], [0.0, 0.0, 1.0])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_normal_derivative_vanishes_on_the_boundary(rng, n):
    x = rng.uniform(-1.0, 1.0, size=(200, n))
    x[:, -1] = 0.0
    y = rng.uniform(-1.0, 1.0, size=(200, n))
    y[:, -1] = rng.uniform(0.1, 1.0, size=200)
    grad = grad_x_N(n, x, y)
    assert np.max(np.abs(grad[:, -1])) < 1e-12


# --- Tests: even-harmonic basis and series ---


def test_basis_polynomials_are_harmonic():
    basis = even_harmonic_basis(3, 4)
    for degree in basis.polynomials:
        for poly in degree:
            lap = sum((poly.diff(v).diff(v) for v in poly.gens), sp.Poly(0, *poly.gens))
            assert lap.is_zero


def test_basis_dimensions_and_normalization():
    basis = even_harmonic_basis(3, 6)
    q = build_quadrature(3, 16)
    for k in range(7):
        assert basis.dimension(k) == k + 1
        phi = basis.evaluate(k, q.nodes)
        gram = (q.weights[:, None] * phi).T @ phi / q.area
        assert np.allclose(gram, 2.0 * np.eye(k + 1), atol=1e-10)


@pytest.mark.parametrize("n", [3, 4])
def test_series_coefficients_match_closed_form(n):
    cfg = KernelConfig(n=n, truncation=6)
    table = coefficient_table(cfg)
    assert np.allclose(table["a_km"], table["closed_form"], rtol=1e-8)
    assert closed_form_coefficient(n, 0) == pytest.approx(cfg.a0)


def test_series_agrees_with_direct_evaluation(cfg3):
    x = np.array([0.3, 0.0, 0.0])
    y = np.array([0.0, 0.6, 0.8])
    assert abs(series_N(cfg3, x, y) - neumann_N(3, x, y)) < 1e-8


def test_series_stays_within_its_bound(cfg3, rng):
    for _ in range(10):
        x, y = rng.normal(size=3), rng.normal(size=3)
        x[-1], y[-1] = abs(x[-1]), abs(y[-1])
        x *= 0.25 / np.linalg.norm(x)
        y /= np.linalg.norm(y)
        gap = abs(series_N(cfg3, x, y) - neumann_N(3, x, y))
        assert gap <= series_error_bound(cfg3, x, y) + 1e-12


def test_series_at_the_origin(cfg3):
    y = np.array([0.0, 0.6, 0.8]) * 2.0
    assert series_N(cfg3, np.zeros(3), y) == pytest.approx(neumann_N(3, np.zeros(3), y))


def test_short_truncation_is_rejected():
    cfg = KernelConfig(n=3, truncation=2)
    assert truncation_bound(cfg, 0.9) > 1e-6
    with pytest.raises(TruncationInsufficient):
        series_N(cfg, [0.9, 0.0, 0.0], [0.0, 0.0, 1.0])


def test_equal_radii_are_rejected(cfg3):
    with pytest.raises(RadiiEqual):
        series_N(cfg3, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])


def test_kernel_config_bounds():
    with pytest.raises(InvalidParams):
        KernelConfig(n=2)
    with pytest.raises(InvalidParams):
        KernelConfig(n=3, truncation=13)


# --- Tests: projection of N ---


def test_projection_vanishes_at_the_origin(cfg3):
    pn, perp = PN_and_perp(cfg3, np.zeros(3), [0.0, 0.6, 0.8])
    assert pn == pytest.approx(2.0 * cfg3.a0)
    assert perp == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("rho", [1.0, 0.05])
def test_projection_matches_closed_form(cfg3, rho):
    q = build_quadrature(3, 16)
    x = 0.3 * np.array([0.6, 0.0, 0.8])
    assert projection_crosscheck(cfg3, x, rho, q) < 1e-8


# --- Tests: sources and the perp potential ---


def test_zero_source_has_zero_potential(cfg3):
    src = source_from_spec(SourceSpec(family=SourceFamily.ZERO), 3)
    x = np.array([[0.1, 0.0, 0.05], [0.0, 0.2, 0.1]])
    assert np.allclose(perp_potential(cfg3, src, x), 0.0)


def test_quadrupole_potential_is_quadratic_near_the_origin(cfg3, quadrupole, quadrupole_sq):
    near = perp_potential(cfg3, quadrupole, [0.1, 0.0, 0.0], quadrupole_sq)
    far = perp_potential(cfg3, quadrupole, [0.2, 0.0, 0.0], quadrupole_sq)
    assert near != 0.0
    assert near / far == pytest.approx(0.25, rel=0.05)


def test_perp_potential_is_linear_in_the_source(cfg3, quadrupole):
    x = [0.1, 0.05, 0.02]
    base = perp_potential(cfg3, quadrupole, x)
    assert perp_potential(cfg3, quadrupole.scaled(10.0), x) == pytest.approx(10.0 * base)


def test_potential_inside_the_band_is_rejected(cfg3, quadrupole):
    with pytest.raises(QuadratureFailure):
        perp_potential(cfg3, quadrupole, [1.5, 0.0, 0.0])


@pytest.mark.parametrize("family", [SourceFamily.QUADRUPOLE, SourceFamily.MIXED])
def test_projection_of_perp_potential_vanishes(cfg3, family):
    src = source_from_spec(SourceSpec(family=family, vector=True), 3)
    q = build_quadrature(3, 16)
    assert projection_residual(cfg3, src, (0.1, 0.2), q) < 1e-6


def test_leaky_source_is_rejected():
    src = SourceData(lambda y: np.ones(np.atleast_2d(y).shape[0]), None, 1.0, 2.0, "flat")
    with pytest.raises(HypothesisViolated):
        src.verify_support(3)


# --- Tests: annulus means ---


def test_annulus_mean_of_constant(quad3):
    one = SphericalFunction(lambda x: np.ones(x.shape[0]), lambda x: np.zeros_like(x))
    norm = annulus_norm(one, 4.0, 0.3, quad3)
    assert norm.m_p == pytest.approx(1.0, rel=1e-12)
    assert norm.grad_m_p == 0.0


def test_annulus_mean_of_radius(quad3):
    norm = annulus_norm(radial(1), 4.0, 1.0, quad3)
    assert norm.m_p == pytest.approx(1.669868, abs=1e-6)
    assert norm.grad_m_p == pytest.approx(1.0, rel=1e-12)
    assert norm.m_1p == pytest.approx(2.669868, abs=1e-6)


def test_annulus_mean_is_homogeneous(quad3):
    small = annulus_norm(radial(2), 4.0, 0.1, quad3)
    large = annulus_norm(radial(2), 4.0, 0.2, quad3)
    assert large.m_p == pytest.approx(4.0 * small.m_p, rel=1e-10)


def test_annulus_parameters(quad3):
    with pytest.raises(InvalidParams):
        annulus_norm(radial(1), 0.5, 1.0, quad3)
    with pytest.raises(InvalidParams):
        annulus_norm(radial(1), 4.0, 0.0, quad3)


# --- Tests: near-origin estimate ---


def test_kernel_radii_cover_the_range():
    spec = KernelSpec()
    radii = kernel_radii(spec)
    hole, beyond = radii[:8], radii[8:]
    assert hole[0] == pytest.approx(1e-4)
    assert hole[-1] == pytest.approx(0.25)
    assert beyond.size == spec.outer_points == 3
    assert beyond[0] == pytest.approx(1.25 * spec.source.r_out)
    assert beyond[-1] == pytest.approx(spec.outer_factor * spec.source.r_out)


def test_kernel_radii_without_outer_points():
    radii = kernel_radii(KernelSpec(outer_points=0))
    assert radii.size == 8
    assert radii[-1] == pytest.approx(0.25)


def test_estimate_needs_p_above_n(cfg3, quadrupole):
    with pytest.raises(HypothesisViolated):
        prop1_check(cfg3, quadrupole, 3.0, kernel_radii(KernelSpec()))


@pytest.mark.parametrize("bad", [0.6, 1.5, 2.0])
def test_estimate_rejects_radii_whose_annulus_meets_the_source(cfg3, quadrupole, bad):
    with pytest.raises(InvalidParams):
        prop1_check(cfg3, quadrupole, 4.0, [1e-3, 1e-2, bad])


def test_estimate_needs_two_radii_in_the_hole(cfg3, quadrupole):
    with pytest.raises(InvalidParams):
        prop1_check(cfg3, quadrupole, 4.0, [1e-3, 3.0, 5.0])


def test_estimate_for_zero_source(cfg3):
    src = source_from_spec(SourceSpec(family=SourceFamily.ZERO), 3)
    check = prop1_check(cfg3, src, 4.0, kernel_radii(KernelSpec()))
    assert check.passed
    assert check.c == 0.0
    assert np.all(check.rhs == 0.0)


@pytest.mark.slow
def test_estimate_constant_is_scale_free(cfg3, quadrupole):
    radii = kernel_radii(KernelSpec())
    check = prop1_check(cfg3, quadrupole, 4.0, radii)
    scaled = prop1_check(cfg3, quadrupole.scaled(10.0), 4.0, radii)
    assert check.passed
    assert check.decades >= 3.0
    assert scaled.c == pytest.approx(check.c, rel=1e-8)


@pytest.mark.slow
def test_estimate_exercises_near_and_far_terms(cfg3, quadrupole):
    radii = kernel_radii(KernelSpec())
    check = prop1_check(cfg3, quadrupole, 4.0, radii)
    hole = check.radii < 0.5 * quadrupole.r_in
    beyond = check.radii > quadrupole.r_out
    assert hole.sum() == 8 and beyond.sum() == 3
    assert np.all(check.near[hole] == 0.0) and np.all(check.far[hole] > 0.0)
    assert np.all(check.near[beyond] > 0.0) and np.all(check.far[beyond] == 0.0)
    assert np.all(check.ratios > 0.0)
    assert check.refined_radii.size > radii.size
    assert not np.any(
        (check.refined_radii >= 0.5 * quadrupole.r_in)
        & (check.refined_radii <= quadrupole.r_out)
    )
    assert 0.5 < check.c_refined / check.c < 2.0


# --- Tests: uniqueness exponent ---


@pytest.mark.parametrize(
    "alpha, n, p, expected",
    [(1.0, 3, 4.0, True), (0.1, 3, 2.0, True), (0.5, 3, 4.0, False), (0.75, 3, 4.0, False)],
)
def test_uniqueness_exponent(alpha, n, p, expected):
    assert uniqueness_exponent_ok(alpha, n, p) is expected


def test_uniqueness_exponent_parameters():
    with pytest.raises(InvalidParams):
        uniqueness_exponent_ok(1.0, 3, 1.5)
