"""Ground truth for the planar GS class.

For a = I + g(r)θθᵀ in two dimensions, u = U cos φ with t = −log r solves the
problem whenever ((1 + g̃)U_t)_t − U = 0. The finite-energy solution decays
like e^{−t} exp(½∫g̃), so ρ(t) = U e^{t} = U(r)/r is the Lipschitz quotient at
the origin. The ODE is integrated in the rescaled variables

    ρ = U e^{t},   σ = (1 + g̃) U_t e^{t},
    ρ' = ρ + σ/(1 + g̃),   σ' = σ + ρ,

where the recessive solution stays O(1) and the dominant one decays backwards.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from regularity.profiles import RadialProfile
from shared.errors import (
    EllipticityLost,
    HypothesisViolated,
    IntegrationFailure,
    RangeTooShort,
    RecessiveSelectionFailed,
)
from shared.logger import logger
from shared.types import (
    AdjudicationReport,
    Agreement,
    EmpiricalRegularity,
    EmpiricalTrend,
    OracleSpec,
    Regularity,
    RegularityVerdict,
)

FloatArray = NDArray[np.float64]

DECADE = float(np.log(10.0))
ELLIPTIC_FLOOR = 0.5
RESIDUAL_TOL = 1.0e-8
FORWARD_TOL = 1.0e-4
FORWARD_BUDGET = 1.0e-6
SLOPE_TOL = 0.01
MIN_DECADES = 4.0


@dataclass
class GSOracleRun:
    profile: RadialProfile
    t: FloatArray
    U: FloatArray
    U_t: FloatArray
    rho: FloatArray
    rho_asym: FloatArray
    residual: float
    forward_error: float

    @property
    def r(self) -> FloatArray:
        return np.exp(-self.t)

    @property
    def decades(self) -> float:
        return float((self.t[-1] - self.t[0]) / DECADE)

    def energy(self) -> float:
        """∫(U² + U_t²) e^{−2t} dt over the computed range."""
        density = (self.U**2 + self.U_t**2) * np.exp(-2.0 * self.t)
        return float(integrate.trapezoid(density, self.t))

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.t,
                "r": self.r,
                "U": self.U,
                "U_t": self.U_t,
                "rho": self.rho,
                "rho_asym": self.rho_asym,
            }
        )


def _check_decay(profile: RadialProfile, t_hi: float) -> None:
    """g̃ and dg̃/dt must shrink between [T/4, T/2] and [2T, 4T]."""
    t_hi = max(t_hi, 40.0)
    early = np.linspace(0.25 * t_hi, 0.5 * t_hi, 257)
    late = np.linspace(2.0 * t_hi, 4.0 * t_hi, 257)
    for fn in (profile.g_tilde, profile.dg_tilde):
        a = float(np.max(np.abs(fn(early))))
        b = float(np.max(np.abs(fn(late))))
        if a == b == 0.0:
            continue
        if not b < a:
            raise HypothesisViolated(
                f"g̃ for {profile.label} does not decay", module="oracle", early=a, late=b
            )


def _log_amplitude(profile: RadialProfile, t: float) -> float:
    value, _ = integrate.quad(lambda s: float(profile.g_tilde(s)), 1.0, t, limit=400)
    return 0.5 * value


def asymptotic_amplitude(profile: RadialProfile, t: ArrayLike) -> FloatArray | float:
    """e^{−t} exp(½∫₁ᵗ g̃ ds), integral by adaptive quadrature."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    _check_decay(profile, float(np.max(ts)))
    out = np.array([np.exp(-s + _log_amplitude(profile, s)) for s in ts])
    return float(out[0]) if np.ndim(t) == 0 else out


def asymptotic_ratio(profile: RadialProfile, t: ArrayLike) -> FloatArray:
    """exp(½∫₁ᵗ g̃ ds), the amplitude with e^{−t} removed."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    return np.exp(np.array([_log_amplitude(profile, s) for s in ts]))


def _rhs(profile: RadialProfile) -> Callable[[float, FloatArray], FloatArray]:
    def rhs(t: float, y: FloatArray) -> FloatArray:
        k = 1.0 + float(profile.g_tilde(t))
        return np.array([y[0] + y[1] / k, y[1] + y[0]])

    return rhs


def _interval_residual(sol: object, profile: RadialProfile, t: FloatArray) -> float:
    """Integral-form residual of both equations between consecutive samples."""
    nodes, weights = np.polynomial.legendre.leggauss(8)
    y = sol(t)  # type: ignore[operator]
    worst = 0.0
    for a, b, ya, yb in zip(t[:-1], t[1:], y.T[:-1], y.T[1:]):
        s = a + 0.5 * (b - a) * (nodes + 1.0)
        ys = sol(s)  # type: ignore[operator]
        k = 1.0 + profile.g_tilde(s)
        w = 0.5 * (b - a) * weights
        drho = yb[0] - ya[0] - w @ (ys[0] + ys[1] / k)
        dsig = yb[1] - ya[1] - w @ (ys[1] + ys[0])
        scale = max(abs(ya[0]), abs(yb[0]), 1.0e-300)
        worst = max(worst, abs(drho) / scale, abs(dsig) / scale)
    return worst


def solve_gs_ode(
    profile: RadialProfile,
    t_max: float = 40.0,
    tol: float = 1.0e-11,
    t_start: float = 2.0,
    samples: int = 761,
) -> GSOracleRun:
    """Recessive solution of ((1 + g̃)U_t)_t = U on [t_start, t_max].

    Integrated backwards from t_max with the decaying data σ = −√(1 + g̃)ρ,
    normalized so that ρ(t_start) equals exp(½∫₁^{t_start} g̃), then
    re-integrated forwards over a window where forward growth stays below
    1e−6 to confirm that no dominant component was picked up.

    Raises:
        EllipticityLost: 1 + g̃ < ½ somewhere on the range.
        RecessiveSelectionFailed: forward and backward runs disagree.
        IntegrationFailure: the integrator gave up.
    """
    t = np.linspace(t_start, t_max, samples)
    k = 1.0 + profile.g_tilde(t)
    if np.min(k) < ELLIPTIC_FLOOR:
        bad = float(t[int(np.argmin(k))])
        raise EllipticityLost(
            f"1 + g̃ = {float(np.min(k)):.3g} < ½ at t = {bad:.3g}",
            t=bad,
            value=float(np.min(k)),
        )
    _check_decay(profile, t_max)

    rhs = _rhs(profile)
    y_end = np.array([1.0, -np.sqrt(1.0 + float(profile.g_tilde(t_max)))])
    back = integrate.solve_ivp(
        rhs,
        (t_max, t_start),
        y_end,
        method="DOP853",
        rtol=tol,
        atol=0.1 * tol,
        dense_output=True,
    )
    if not back.success:
        raise IntegrationFailure(f"backward GS integration failed: {back.message}", module="oracle")

    scale = float(asymptotic_ratio(profile, t_start)[0]) / float(back.sol(t_start)[0])
    y = back.sol(t) * scale
    residual = _interval_residual(back.sol, profile, t)
    if residual > RESIDUAL_TOL:
        raise IntegrationFailure(
            f"ODE residual {residual:.3g} exceeds {RESIDUAL_TOL}", module="oracle"
        )

    t_check = min(t_start + 0.5 * np.log(FORWARD_BUDGET / tol), 0.5 * t_max)
    forward_error = 0.0
    if t_check > t_start:
        window = t[t <= t_check]
        fwd = integrate.solve_ivp(
            rhs,
            (t_start, t_check),
            y[:, 0],
            method="DOP853",
            rtol=tol,
            atol=0.1 * tol,
            t_eval=window,
        )
        if not fwd.success:
            raise IntegrationFailure(f"forward re-check failed: {fwd.message}", module="oracle")
        ref = y[0, : window.size]
        forward_error = float(np.max(np.abs(fwd.y[0] - ref) / np.abs(ref)))
        if forward_error > FORWARD_TOL:
            raise RecessiveSelectionFailed(
                f"forward re-integration drifts by {forward_error:.3g} before t = {t_check:.3g}",
                error=forward_error,
            )

    rho, sigma = y
    U = rho * np.exp(-t)
    U_t = sigma * np.exp(-t) / k
    rho_asym = asymptotic_ratio(profile, t)
    logger.debug(
        "GS oracle {}: rho({:.1f})={:.4g} residual={:.2g} forward={:.2g}",
        profile.label,
        t_max,
        rho[-1],
        residual,
        forward_error,
    )
    return GSOracleRun(profile, t, U, U_t, rho, rho_asym, residual, forward_error)


def run_oracle(profile: RadialProfile, t_max: float, spec: OracleSpec) -> GSOracleRun:
    return solve_gs_ode(profile, t_max, spec.rtol, spec.t_start, spec.samples)


def _decade_slopes(run: GSOracleRun) -> Tuple[float, ...]:
    """d ln ρ/dt over whole decades counted back from the end of the run."""
    log_rho = np.log(np.abs(run.rho))
    end = float(run.t[-1])
    slopes = []
    j = 0
    while end - (j + 1) * DECADE >= run.t[0] - 1.0e-12:
        hi = np.interp(end - j * DECADE, run.t, log_rho)
        lo = np.interp(end - (j + 1) * DECADE, run.t, log_rho)
        slopes.append(float((hi - lo) / DECADE))
        j += 1
    return tuple(slopes)


def measure_regularity(run: GSOracleRun) -> EmpiricalRegularity:
    """Classify ρ by its log-slope over the last two decades.

    Both slopes above 0.01 is diverging, both below −0.01 is vanishing, and
    anything else is bounded.

    Raises:
        RangeTooShort: the run covers fewer than four decades in r.
    """
    if run.decades < MIN_DECADES:
        raise RangeTooShort(f"run spans {run.decades:.2f} decades, need {MIN_DECADES:g}")
    slopes = _decade_slopes(run)
    last = slopes[:2]
    if all(s > SLOPE_TOL for s in last):
        trend = EmpiricalTrend.DIVERGING
    elif all(s < -SLOPE_TOL for s in last):
        trend = EmpiricalTrend.VANISHING
    else:
        trend = EmpiricalTrend.BOUNDED

    derivative: Optional[float] = None
    if trend == EmpiricalTrend.BOUNDED:
        derivative = float(run.rho[-1])
    elif trend == EmpiricalTrend.VANISHING:
        derivative = 0.0
    return EmpiricalRegularity(
        lipschitz_quotient=float(np.max(np.abs(run.rho))),
        trend=trend,
        derivative_estimate=derivative,
        slopes=list(slopes),
    )


_GUARANTEES = (Regularity.DIFFERENTIABLE, Regularity.LIPSCHITZ)


def adjudicate(verdict: RegularityVerdict, emp: EmpiricalRegularity) -> AdjudicationReport:
    """Compare a predicted verdict with the measured trend.

    A guarantee (Lipschitz or differentiable) that meets a diverging run is a
    contradiction; every other pairing is consistent.
    """
    predicted = verdict.regularity
    if predicted in _GUARANTEES and emp.trend == EmpiricalTrend.DIVERGING:
        agreement = Agreement.CONTRADICTION
        reason = f"{predicted.value} predicted but the Lipschitz quotient diverges"
    elif predicted in _GUARANTEES:
        agreement = Agreement.CONSISTENT
        reason = f"{predicted.value} predicted and the quotient is {emp.trend.value}"
    elif emp.trend == EmpiricalTrend.DIVERGING:
        agreement = Agreement.CONSISTENT
        reason = "no guarantee predicted and the quotient diverges"
    else:
        agreement = Agreement.CONSISTENT
        reason = f"{predicted.value} predicts nothing; the quotient is {emp.trend.value}"
    logger.info("adjudication: {} ({})", agreement.value, reason)
    return AdjudicationReport(agreement=agreement, reason=reason, verdict=verdict, empirical=emp)


__all__ = [
    "GSOracleRun",
    "adjudicate",
    "asymptotic_amplitude",
    "asymptotic_ratio",
    "measure_regularity",
    "run_oracle",
    "solve_gs_ode",
]
