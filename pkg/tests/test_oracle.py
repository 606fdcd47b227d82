import numpy as np
import pytest

from regularity.oracle import (
    adjudicate,
    asymptotic_amplitude,
    measure_regularity,
    run_oracle,
    solve_gs_ode,
)
from regularity.profiles import RadialProfile
from shared.errors import EllipticityLost, HypothesisViolated, RangeTooShort
from shared.types import (
    Agreement,
    Asymptotic,
    CriterionOutcome,
    EmpiricalRegularity,
    EmpiricalTrend,
    OracleSpec,
    ProfileFamily,
    Provenance,
    Regularity,
    RegularityVerdict,
    Stability,
    VerdictEvidence,
)

# --- Fixtures ---


def verdict(regularity):
    evidence = VerdictEvidence(
        provenance=Provenance.HALFSPACE,
        k_stat=1.0,
        mu_integral_sup=0.0,
        mu_integral_tail=0.0,
        cond1=CriterionOutcome.SATISFIED,
        cond2=CriterionOutcome.VIOLATED,
        t_max=40.0,
        tolerance=1e-10,
        k_threshold=1e6,
        margin=0.01,
        delta=1.0,
    )
    return RegularityVerdict(
        stability=Stability.UNIFORMLY_STABLE,
        asymptotic=Asymptotic.ASYMPTOTICALLY_CONSTANT,
        regularity=regularity,
        evidence=evidence,
    )


def empirical(trend):
    return EmpiricalRegularity(lipschitz_quotient=1.0, trend=trend)


@pytest.fixture(scope="module")
def logpow_runs():
    profiles = {
        "+": RadialProfile(ProfileFamily.LOGPOW, alpha=0.75, sign=1),
        "-": RadialProfile(ProfileFamily.LOGPOW, alpha=0.75, sign=-1),
    }
    return {key: solve_gs_ode(p) for key, p in profiles.items()}


# --- Tests: solver ---


def test_laplacian_quotient_is_constant():
    run = run_oracle(RadialProfile(), 40.0, OracleSpec())
    assert np.allclose(run.rho, 1.0, atol=1e-8)
    assert run.residual < 1e-8
    emp = measure_regularity(run)
    assert emp.trend == EmpiricalTrend.BOUNDED
    assert emp.derivative_estimate == pytest.approx(1.0, abs=1e-8)


def test_positive_logpow_diverges(logpow_runs):
    emp = measure_regularity(logpow_runs["+"])
    assert emp.trend == EmpiricalTrend.DIVERGING
    assert emp.derivative_estimate is None
    assert all(s > 0.01 for s in emp.slopes[:2])


def test_negative_logpow_vanishes(logpow_runs):
    emp = measure_regularity(logpow_runs["-"])
    assert emp.trend == EmpiricalTrend.VANISHING
    assert emp.derivative_estimate == 0.0


def test_quotient_follows_the_asymptotic_ratio(logpow_runs):
    run = logpow_runs["+"]
    ratio = np.interp(27.6, run.t, run.rho) / np.interp(4.6, run.t, run.rho)
    expected = np.exp(2.0 * (28.6**0.25 - 5.6**0.25))
    assert ratio == pytest.approx(expected, rel=0.25)


def test_recessive_solution_has_finite_energy(logpow_runs):
    run = logpow_runs["+"]
    assert 0.0 < run.energy() < np.inf
    assert run.forward_error < 1e-4
    assert list(run.frame().columns) == ["t", "r", "U", "U_t", "rho", "rho_asym"]


def test_log_one_profile_still_diverges():
    run = solve_gs_ode(RadialProfile(ProfileFamily.LOGPOW, alpha=1.0, sign=1))
    assert measure_regularity(run).trend == EmpiricalTrend.DIVERGING


def test_small_oscillating_profile_is_bounded():
    run = solve_gs_ode(RadialProfile(ProfileFamily.SINLOG, c=0.1, alpha=1.0))
    emp = measure_regularity(run)
    assert emp.trend == EmpiricalTrend.BOUNDED
    assert emp.derivative_estimate is not None


def test_asymptotic_amplitude_closed_form():
    profile = RadialProfile(ProfileFamily.LOGPOW, alpha=0.75, sign=1)
    expected = np.exp(-16.0 + 2.0 * (17.0**0.25 - 2.0**0.25))
    assert asymptotic_amplitude(profile, 16.0) == pytest.approx(expected, rel=1e-8)


def test_ellipticity_is_required():
    profile = RadialProfile(ProfileFamily.LOGPOW, alpha=0.75, sign=-1)
    with pytest.raises(EllipticityLost):
        solve_gs_ode(profile, t_start=1.0)


def test_profile_must_decay():
    with pytest.raises(HypothesisViolated):
        solve_gs_ode(RadialProfile(ProfileFamily.POWER, c=0.1, gamma=0.0))


def test_short_run_cannot_be_measured():
    run = solve_gs_ode(RadialProfile(), t_max=10.0)
    with pytest.raises(RangeTooShort):
        measure_regularity(run)


# --- Tests: adjudication ---


def test_guarantee_against_divergence_is_a_contradiction():
    report = adjudicate(verdict(Regularity.DIFFERENTIABLE), empirical(EmpiricalTrend.DIVERGING))
    assert report.agreement == Agreement.CONTRADICTION


@pytest.mark.parametrize(
    "regularity, trend",
    [
        (Regularity.NO_GUARANTEE, EmpiricalTrend.DIVERGING),
        (Regularity.LIPSCHITZ, EmpiricalTrend.BOUNDED),
        (Regularity.DIFFERENTIABLE, EmpiricalTrend.VANISHING),
        (Regularity.INCONCLUSIVE, EmpiricalTrend.DIVERGING),
    ],
)
def test_consistent_pairings(regularity, trend):
    assert adjudicate(verdict(regularity), empirical(trend)).agreement == Agreement.CONSISTENT
