import numpy as np
import pytest

from regularity.coefficients import (
    ModulusOfContinuity,
    build_problem,
    certify_modulus,
    compactify,
    constant_field,
    epsilon_of_t,
    flatten,
    gs_field,
    identity_field,
    quadratic_graph,
    radial_graph,
    validate_field,
    validate_graph,
)
from regularity.geometry import dyadic_grid
from shared.errors import (
    DimensionMismatch,
    NotMonotone,
    NotNormalized,
    NotSquareDini,
    VanishingConditionFailed,
)
from shared.types import FieldKind, ProblemSpec, ProfileFamily, ProfileSpec

# --- Fixtures ---


def log_power(a):
    return lambda r: (1.0 - np.log(np.maximum(np.asarray(r, dtype=float), 1e-300))) ** -a


# --- Tests: profiles ---


@pytest.mark.parametrize("name", ["sqrt", "logpow+", "logpow-", "sinlog"])
def test_logarithmic_form_matches_profile(profiles, name):
    p = profiles[name]
    t = np.array([0.5, 3.0, 12.0])
    assert np.allclose(p.g(np.exp(-t)), p.g_tilde(t), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("name", ["sqrt", "logpow+", "sinlog"])
def test_derivative_of_logarithmic_form(profiles, name):
    p = profiles[name]
    t = np.array([1.0, 5.0, 20.0])
    h = 1e-5
    numeric = (p.g_tilde(t + h) - p.g_tilde(t - h)) / (2.0 * h)
    assert np.allclose(p.dg_tilde(t), numeric, atol=1e-8)


def test_modulus_dominates_profile(profiles):
    r = np.logspace(-10, 0, 50)
    for p in profiles.values():
        assert np.all(np.abs(p.g(r)) <= p.modulus(0.25)(r) + 1e-14)


# --- Tests: moduli ---


def test_square_root_modulus_has_unit_dini_integral():
    m = certify_modulus(lambda r: np.sqrt(r), 0.25, label="sqrt")
    assert m.certified
    assert m.dini_integral == pytest.approx(1.0, rel=1e-8)
    assert m.delta == pytest.approx(1.0)


def test_inverse_log_modulus_is_square_dini():
    m = certify_modulus(log_power(1.0), 0.25)
    assert m.dini_integral == pytest.approx(1.0, rel=1e-6)


def test_inverse_sqrt_log_modulus_is_not_square_dini():
    with pytest.raises(NotSquareDini):
        certify_modulus(log_power(0.5), 0.25)


def test_lenient_certification_keeps_modulus_uncertified():
    m = certify_modulus(log_power(0.5), 0.25, strict=False)
    assert not m.certified
    assert m.dini_integral is None


def test_decreasing_modulus_is_rejected():
    with pytest.raises(NotMonotone):
        certify_modulus(lambda r: 1.0 - np.asarray(r), 0.25)


def test_vanishing_condition():
    with pytest.raises(VanishingConditionFailed):
        certify_modulus(lambda r: np.power(r, 0.9), 0.25)


def test_epsilon_of_t_for_linear_modulus():
    m = ModulusOfContinuity(lambda r: np.asarray(r, dtype=float), 0.25, 1.0, 0.5)
    eps = epsilon_of_t(m)
    assert float(eps(1.0)) == pytest.approx(np.exp(-1.0))
    assert eps.integral_sq() == pytest.approx(0.5, rel=1e-8)
    assert float(m(2.0)) == 1.0


# --- Tests: fields ---


def test_identity_field_is_certified(quad3):
    a = validate_field(identity_field(3), quad3)
    assert a.certified
    assert a.lam == pytest.approx(1.0)
    assert a.Lam == pytest.approx(1.0)


def test_gs_field_ellipticity_bounds(quad2, profiles):
    a = validate_field(gs_field(2, profiles["logpow+"]), quad2)
    assert a.lam == pytest.approx(1.0)
    assert a.Lam > 1.0


def test_gs_matrix_is_rank_one_perturbation(profiles):
    a = gs_field(2, profiles["logpow+"])
    x = np.array([[0.3, 0.4]])
    g = float(profiles["logpow+"].g(0.5))
    theta = np.array([0.6, 0.8])
    assert np.allclose(a(x)[0], np.eye(2) + g * np.outer(theta, theta))


def test_constant_field_must_be_normalized(quad2):
    a = constant_field([[2.0, 0.0], [0.0, 1.0]])
    assert not a.normalized
    with pytest.raises(NotNormalized):
        validate_field(a, quad2)


def test_compactified_field_is_identity_outside_unit_ball(profiles):
    a = compactify(gs_field(2, profiles["logpow+"]))
    x = np.array([[0.0, 1.5], [0.3, 0.4]])
    mats = a(x)
    assert np.allclose(mats[0], np.eye(2))
    assert not np.allclose(mats[1], np.eye(2))


def test_uncertified_gs_field_from_config():
    problem = ProblemSpec(
        field=FieldKind.GS, g=ProfileSpec(family=ProfileFamily.LOGPOW, alpha=0.5)
    )
    field, graph = build_problem(problem, 2)
    assert graph is None
    assert not field.modulus.certified


# --- Tests: boundary graphs ---


def test_flattened_coefficients_for_parabola():
    h = validate_graph(quadratic_graph(2, [2.0]))
    flat = flatten(identity_field(2), h)
    a = flat(np.array([[0.1, 0.3]]))[0]
    assert a[0, 0] == pytest.approx(1.0)
    assert a[0, 1] == pytest.approx(-0.2)
    assert a[1, 0] == pytest.approx(-0.2)
    assert a[1, 1] == pytest.approx(1.04)


def test_identity_flag_follows_the_matrix(profiles):
    assert identity_field(3).identity
    assert compactify(identity_field(3)).identity
    assert constant_field(np.eye(2)).identity
    assert not constant_field([[1.0, 0.1], [0.1, 1.0]]).identity
    assert not gs_field(2, profiles["logpow+"]).identity
    h = validate_graph(quadratic_graph(2, [2.0]))
    assert not flatten(identity_field(2), h).identity


def test_flattened_bounds_come_from_the_jacobian(quad2):
    # |∇h| = 2|ỹ| reaches 1 at |ỹ| = 0.5, where σ² of J are 1/φ² and φ²
    golden2 = (1.0 + 5.0**0.5) ** 2 / 4.0
    h = validate_graph(quadratic_graph(2, [2.0]))
    flat = flatten(identity_field(2), h)
    assert flat.lam == pytest.approx(1.0 / golden2, rel=1e-12)
    assert flat.Lam == pytest.approx(golden2, rel=1e-12)
    for r in dyadic_grid(0.5, 30):
        mats = flat(quad2.points(float(r)))
        eig = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, 1, 2)))
        assert eig.min() >= flat.lam - 1e-12
        assert eig.max() <= flat.Lam + 1e-12


@pytest.mark.parametrize("curvature", [0.5, 2.0])
def test_flattened_gs_field_passes_validation(quad2, profiles, curvature):
    a = validate_field(gs_field(2, profiles["logpow+"]), quad2)
    h = validate_graph(quadratic_graph(2, [curvature]))
    flat = validate_field(flatten(a, h), quad2)
    assert flat.certified
    assert flat.modulus.certified
    assert 0.0 < flat.lam <= 1.0 <= flat.Lam


def test_flattened_laplacian_over_radial_graph_passes_validation(quad3, profiles):
    h = validate_graph(radial_graph(3, profiles["logpow+"]))
    flat = validate_field(flatten(identity_field(3), h), quad3)
    assert flat.certified
    assert flat.modulus.delta > 0.0


def test_quadratic_graph_dimension():
    with pytest.raises(DimensionMismatch):
        quadratic_graph(3, [1.0])


def test_radial_graph_passes_validation(profiles):
    h = validate_graph(radial_graph(3, profiles["logpow+"]))
    assert float(h.height(np.zeros((1, 2)))[0]) == 0.0
