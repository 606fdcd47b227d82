from dataclasses import replace

import numpy as np
import pytest

from regularity.coefficients import (
    CoefficientField,
    epsilon_of_t,
    flatten,
    gs_field,
    identity_field,
    quadratic_graph,
    zero_modulus,
)
from regularity.geometry import build_quadrature
from regularity.reduction import (
    assemble_system,
    compute_R_curved,
    compute_R_curved_laplace,
    compute_R_dim2,
    compute_R_halfspace,
    diagonalizer,
    m_infinity,
    moments,
    mu_of,
    reduce_problem,
    reduction_frame,
    t_grid,
)
from shared.errors import DimensionMismatch, NonInvertibleA
from shared.types import Provenance

RADII = np.array([0.4, 0.1, 1e-2, 1e-4])

# --- Tests ---


def test_identity_halfspace_matrix_vanishes(quad3):
    system = compute_R_halfspace(identity_field(3), quad3, RADII)
    assert system.R.shape == (4, 2, 2)
    assert np.allclose(system.R, 0.0, atol=1e-13)
    assert system.provenance == Provenance.HALFSPACE


def test_identity_moments_are_exact(quad3):
    m = moments(identity_field(3), quad3, 0.5)
    assert m.alpha == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(m.A, np.eye(2) / 3.0, atol=1e-10)
    assert np.allclose(m.B, np.eye(2) / 3.0, atol=1e-10)
    assert np.allclose(m.C, np.eye(2), atol=1e-10)
    assert np.allclose(m.beta, 0.0, atol=1e-10)
    assert np.allclose(m.gamma, 0.0, atol=1e-10)


def test_planar_gs_moments(quad2, profiles):
    p = profiles["logpow+"]
    g = float(p.g(np.array([0.1]))[0])
    m = moments(gs_field(2, p), quad2, 0.1)
    assert m.alpha == pytest.approx(1.0 + g, abs=1e-10)
    assert m.C[0, 0] == pytest.approx(1.0 + 0.5 * g, abs=1e-10)
    assert np.allclose(m.B - m.A, 0.0, atol=1e-12)
    assert m.C[0, 0] - 2.0 * m.B[0, 0] == pytest.approx(-0.5 * g, abs=1e-10)


def test_gs_halfspace_matrix_in_the_plane(quad2, profiles):
    p = profiles["logpow+"]
    system = mu_of(compute_R_halfspace(gs_field(2, p), quad2, RADII))
    g = p.g(RADII)
    assert np.allclose(system.R[:, 0, 0], -0.5 * g, atol=1e-12)
    assert np.allclose(compute_R_dim2(gs_field(2, p), quad2, RADII), -0.5 * g, atol=1e-12)
    assert np.allclose(system.mu, 0.5 * g, atol=1e-12)


def test_gs_halfspace_matrix_in_three_dimensions(quad3, profiles):
    p = profiles["logpow-"]
    system = compute_R_halfspace(gs_field(3, p), quad3, RADII)
    g = p.g(RADII)
    expected = -(2.0 / 3.0) * g[:, None, None] * np.eye(2)[None]
    assert np.allclose(system.R, expected, atol=1e-12)


def test_planar_formula_needs_two_dimensions(quad3):
    with pytest.raises(DimensionMismatch):
        compute_R_dim2(identity_field(3), quad3, RADII)


def test_laplacian_on_parabola(quad2):
    h = quadratic_graph(2, [2.0])
    system = compute_R_curved_laplace(h, quad2, RADII)
    assert np.allclose(system.R[:, 0, 0], 8.0 * RADII / (3.0 * np.pi), rtol=1e-12)
    assert system.provenance == Provenance.CURVED_LAPLACE


def test_curved_integrand_agrees_with_laplacian_and_flattening(quad2):
    h = quadratic_graph(2, [2.0])
    curved = compute_R_curved(identity_field(2), h, quad2, RADII)
    laplace = compute_R_curved_laplace(h, quad2, RADII)
    flat = compute_R_halfspace(flatten(identity_field(2), h), quad2, RADII)
    assert np.allclose(curved.R, laplace.R, atol=1e-12)
    assert np.allclose(curved.R, flat.R, atol=1e-12)


def test_reduce_problem_dispatch(quad2, profiles):
    h = quadratic_graph(2, [2.0])
    gs = gs_field(2, profiles["logpow+"])
    assert reduce_problem(gs, None, quad2, RADII).provenance == Provenance.HALFSPACE
    assert reduce_problem(identity_field(2), h, quad2, RADII).provenance == (
        Provenance.CURVED_LAPLACE
    )
    assert reduce_problem(gs, h, quad2, RADII).provenance == Provenance.CURVED


def test_reduce_problem_dispatch_ignores_labels(quad2, profiles):
    h = quadratic_graph(2, [2.0])
    plain = replace(identity_field(2), label="plain")
    disguised = replace(gs_field(2, profiles["logpow+"]), label="identity")
    assert reduce_problem(plain, h, quad2, RADII).provenance == Provenance.CURVED_LAPLACE
    assert reduce_problem(disguised, h, quad2, RADII).provenance == Provenance.CURVED


def test_off_grid_evaluation_matches_samples(quad2, profiles):
    system = compute_R_halfspace(gs_field(2, profiles["sinlog"]), quad2, RADII)
    assert np.allclose(system.R_at(RADII), system.R)
    assert np.allclose(system.R_of_t(-np.log(RADII)), system.R)


def test_t_grid_spacing():
    t = t_grid(40.0, 0.1)
    assert t.size == 401
    assert t[-1] == pytest.approx(40.0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_diagonalizer_splits_limit_matrix(n):
    J, J_inv = diagonalizer(n)
    d = n - 1
    assert np.allclose(J_inv @ J, np.eye(2 * d))
    diag = J_inv @ m_infinity(n) @ J
    expected = np.diag([0.0] * d + [-float(n)] * d)
    assert np.allclose(diag, expected, atol=1e-12)


def test_identity_assembles_to_limit_matrix(quad3):
    t = np.linspace(0.0, 10.0, 11)
    sys = assemble_system(identity_field(3), quad3, t, epsilon_of_t(zero_modulus()))
    assert np.allclose(sys.M, m_infinity(3)[None], atol=1e-12)
    assert np.allclose(sys.S1, 0.0, atol=1e-12)
    assert np.allclose(sys.calR, 0.0, atol=1e-12)


def test_gs_splitting_is_exact(quad2, profiles):
    a = gs_field(2, profiles["logpow+"])
    t = np.linspace(0.0, 30.0, 31)
    sys = assemble_system(a, quad2, t, epsilon_of_t(a.modulus))
    assert np.allclose(sys.M, sys.M_inf[None] + sys.S1 + sys.S2, atol=1e-12)
    assert np.isfinite(sys.c_s2)
    assert np.isfinite(sys.c_r1)
    blocks = sys.blocks()
    assert all(b.shape == (31, 1, 1) for b in blocks)


@pytest.mark.parametrize("n", [2, 3])
def test_assembled_reference_matches_halfspace_matrix(n, request, profiles):
    q = request.getfixturevalue(f"quad{n}")
    a = gs_field(n, profiles["logpow+"])
    t = np.linspace(1.0, 30.0, 30)
    sys = assemble_system(a, q, t, epsilon_of_t(a.modulus))
    direct = compute_R_halfspace(a, q, np.exp(-t))
    assert np.allclose(sys.R_ref, direct.R, rtol=0.0, atol=1e-12)
    assert np.isfinite(sys.c_r1) and sys.c_r1 >= 0.0
    d = n - 1
    remainder = np.linalg.norm(sys.calR[:, :d, :d] - sys.R_ref, ord=2, axis=(1, 2))
    assert np.all(remainder <= sys.c_r1 * sys.eps**2 * (1.0 + 1e-12))


def test_fitted_remainder_constant_is_stable_under_refinement(quad3, profiles):
    a = gs_field(3, profiles["logpow+"])
    eps = epsilon_of_t(a.modulus)
    coarse = assemble_system(a, quad3, np.linspace(1.0, 30.0, 30), eps)
    fine = assemble_system(a, quad3, np.linspace(1.0, 30.0, 59), eps)
    assert coarse.c_r1 > 0.0
    assert fine.c_r1 >= coarse.c_r1 * (1.0 - 1e-12)
    assert fine.c_r1 < 2.0 * coarse.c_r1


def test_reduction_does_not_depend_on_quadrature_order(quad3, profiles):
    a = gs_field(3, profiles["logpow+"])
    low = build_quadrature(3, 8)
    t = np.linspace(1.0, 20.0, 20)
    assert np.allclose(
        compute_R_halfspace(a, low, RADII).R,
        compute_R_halfspace(a, quad3, RADII).R,
        rtol=0.0,
        atol=1e-9,
    )
    m_low = mu_of(compute_R_halfspace(a, low, RADII)).mu
    m_high = mu_of(compute_R_halfspace(a, quad3, RADII)).mu
    assert np.allclose(m_low, m_high, rtol=0.0, atol=1e-9)
    eps = epsilon_of_t(a.modulus)
    assert np.allclose(
        assemble_system(a, low, t, eps).M,
        assemble_system(a, quad3, t, eps).M,
        rtol=0.0,
        atol=1e-9,
    )


def test_degenerate_field_is_rejected(quad2):
    zero = CoefficientField(2, lambda x: np.zeros((x.shape[0], 2, 2)), zero_modulus())
    with pytest.raises(NonInvertibleA):
        assemble_system(zero, quad2, [0.0, 1.0], epsilon_of_t(zero_modulus()))


def test_reduction_frame_columns(quad2, profiles):
    system = compute_R_halfspace(gs_field(2, profiles["logpow+"]), quad2, RADII)
    frame = reduction_frame(system)
    assert list(frame.columns) == ["t", "r", "mu", "R_norm", "S1_norm", "S2_over_eps2"]
    assert len(frame) == RADII.size
