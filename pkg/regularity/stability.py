"""Finite-horizon stability analysis of the reduced dynamical system.

The fundamental matrix of Φ' = -R(e^{-t})Φ is integrated with an embedded
Runge-Kutta pair and judged on decades of t (D = ln 10, one decade of r).
Asymptotic properties cannot be decided on a finite horizon, so every
decision is three-valued and carries the statistics it was based on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, interpolate, linalg

from regularity.coefficients import (
    BoundaryGraph,
    CoefficientField,
    epsilon_of_t,
    flatten,
    validate_field,
    validate_graph,
)
from regularity.geometry import HalfSphereQuadrature, build_quadrature, dyadic_grid
from regularity.reduction import (
    AssembledSystem,
    ReducedSystem,
    assemble_system,
    mu_of,
    reduce_problem,
    t_grid,
)
from shared.errors import (
    ForcingRejected,
    ReductionError,
    GridTooShallow,
    IntegrationFailure,
    ToleranceNotMet,
    WrongDimension,
)
from shared.logger import logger
from shared.types import (
    Asymptotic,
    CriterionOutcome,
    Regularity,
    RegularityVerdict,
    RunConfig,
    Stability,
    TailTrend,
    VerdictEvidence,
)

FloatArray = NDArray[np.float64]
VectorOfTime = Callable[[FloatArray], FloatArray]

DECADE = float(np.log(10.0))
LIOUVILLE_TOL = 1.0e-6
ZERO_LEVEL = 1.0e-13
GRADIENT_CLAIM = "all derivatives zero"


# --- fundamental matrix -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FundamentalTrajectory:
    t: FloatArray
    phi: FloatArray
    tol: float
    k_stat: float
    k_times: FloatArray
    k_history: FloatArray
    trace_integral: FloatArray
    liouville_error: float
    interpolant: Any = None

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    def at(self, t: ArrayLike) -> FloatArray:
        """Φ at arbitrary times from the dense output."""
        times = np.atleast_1d(np.asarray(t, dtype=float))
        d = self.phi.shape[1]
        if self.interpolant is None:
            flat = self.phi.reshape(len(self.t), -1)
            cols = [np.interp(times, self.t, flat[:, j]) for j in range(d * d)]
            return np.stack(cols, axis=1).reshape(-1, d, d)
        return np.asarray(self.interpolant(times))[: d * d].T.reshape(-1, d, d)


def _integrate_phi(system: ReducedSystem, t0: float, t_eval: FloatArray, tol: float) -> Any:
    d = system.n - 1

    def rhs(t: float, y: FloatArray) -> FloatArray:
        R = system.R_of_t(t)[0]
        phi = y[: d * d].reshape(d, d)
        return np.concatenate([(-R @ phi).ravel(), [np.trace(R)]])

    y0 = np.concatenate([np.eye(d).ravel(), [0.0]])
    sol = integrate.solve_ivp(
        rhs,
        (t0, float(t_eval[-1])),
        y0,
        method="DOP853",
        t_eval=t_eval,
        rtol=tol,
        atol=tol * 1.0e-3,
        dense_output=True,
    )
    if not sol.success:
        raise IntegrationFailure(f"integrator stopped: {sol.message}")
    return sol


def _sample_indices(count: int, samples: int) -> FloatArray:
    return np.unique(np.linspace(0, count - 1, min(samples, count)).round().astype(int))


def _transition_norms(phi: FloatArray) -> FloatArray:
    """P[i, j] = ‖Φ(t_j) Φ(t_i)⁻¹‖ for i ≤ j, zero below the diagonal."""
    m = phi.shape[0]
    out = np.zeros((m, m))
    for i in range(m):
        lu = linalg.lu_factor(phi[i])
        for j in range(i, m):
            # Φ(s)^{-T}Φ(t)^T has the same 2-norm as Φ(t)Φ(s)^{-1}
            x = linalg.lu_solve(lu, phi[j].T, trans=1)
            out[i, j] = np.linalg.norm(x, ord=2)
    return out


def fundamental_matrix(
    system: ReducedSystem,
    t_max: float,
    tol: float = 1.0e-10,
    pair_samples: int = 100,
    t_step: float = 0.1,
) -> FundamentalTrajectory:
    """Solve Φ' = -R(e^{-t})Φ, Φ(0) = I, with ∫ tr R carried alongside.

    Raises:
        IntegrationFailure: the integrator could not reach t_max.
        ToleranceNotMet: det Φ departs from exp(-∫tr R) by more than 1e-6 relative.
    """
    t_eval = t_grid(t_max, t_step)
    sol = _integrate_phi(system, 0.0, t_eval, tol)
    d = system.n - 1
    phi = sol.y[: d * d].T.reshape(-1, d, d)
    trace_int = sol.y[-1]

    expected = np.exp(-trace_int)
    det = np.linalg.det(phi)
    liouville = float(np.max(np.abs(det - expected) / np.abs(expected)))
    if liouville > LIOUVILLE_TOL:
        raise ToleranceNotMet(f"Liouville identity off by {liouville:.3e}", error=liouville)

    idx = _sample_indices(len(t_eval), pair_samples)
    norms = _transition_norms(phi[idx])
    history = np.maximum.accumulate(np.max(norms, axis=0))
    history = np.maximum(history, 1.0)
    logger.info(
        "trajectory to t={} ({} steps): K_stat={:.6g}, Liouville error {:.2e}",
        t_max,
        sol.t.size,
        history[-1],
        liouville,
    )
    return FundamentalTrajectory(
        t=t_eval,
        phi=phi,
        tol=tol,
        k_stat=float(history[-1]),
        k_times=t_eval[idx],
        k_history=history,
        trace_integral=trace_int,
        liouville_error=liouville,
        interpolant=sol.sol,
    )


def restart_from(
    system: ReducedSystem, trajectory: FundamentalTrajectory, s: float
) -> Tuple[FloatArray, FloatArray]:
    """Φ(t; s) with Φ(s; s) = I on the trajectory times t ≥ s."""
    times = trajectory.t[trajectory.t >= s]
    if times.size == 0 or times[0] > s:
        times = np.concatenate([[s], times])
    sol = _integrate_phi(system, s, times, trajectory.tol)
    d = system.n - 1
    return times, sol.y[: d * d].T.reshape(-1, d, d)


# --- decisions ---------------------------------------------------------------


def _decade_growth(times: FloatArray, level: FloatArray, decades: int = 3) -> List[float]:
    """Relative growth of ``level`` across each of the last decades, latest first."""
    T = float(times[-1])
    growth = []
    for j in range(decades):
        hi, lo = T - j * DECADE, T - (j + 1) * DECADE
        if lo < float(times[0]):
            break
        a, b = np.interp([lo, hi], times, level)
        growth.append(float(b / a - 1.0))
    return growth


def _growth_outcome(
    times: FloatArray, level: FloatArray, threshold: float, margin: float
) -> Tuple[CriterionOutcome, List[float]]:
    growth = _decade_growth(times, level)
    top = float(level[-1])
    if top > threshold or (len(growth) == 3 and all(g > margin for g in growth)):
        return CriterionOutcome.VIOLATED, growth
    if growth and growth[0] < margin:
        return CriterionOutcome.SATISFIED, growth
    return CriterionOutcome.INCONCLUSIVE, growth


@dataclass(frozen=True)
class StabilityDecision:
    result: Stability
    k_stat: float
    growth: List[float]


def uniform_stability(
    trajectory: FundamentalTrajectory, k_threshold: float = 1.0e6, margin: float = 0.01
) -> StabilityDecision:
    """Bounded transition matrices Φ(t)Φ(s)⁻¹.

    NotUniformlyStable when K_stat passes the threshold or grows by more than
    ``margin`` in each of the last three decades; UniformlyStable when it
    stays below the threshold and stopped growing in the last decade.
    """
    outcome, growth = _growth_outcome(
        trajectory.k_times, trajectory.k_history, k_threshold, margin
    )
    result = {
        CriterionOutcome.SATISFIED: Stability.UNIFORMLY_STABLE,
        CriterionOutcome.VIOLATED: Stability.NOT_UNIFORMLY_STABLE,
        CriterionOutcome.INCONCLUSIVE: Stability.INCONCLUSIVE,
    }[outcome]
    logger.debug(
        "uniform stability {} (K={:.4g}, growth {})", result.value, trajectory.k_stat, growth
    )
    return StabilityDecision(result, trajectory.k_stat, growth)


@dataclass(frozen=True)
class AsymptoticDecision:
    result: Asymptotic
    increments: List[float]
    limit: FloatArray


def asymptotically_constant(
    trajectory: FundamentalTrajectory, margin: float = 0.01, noise_floor: Optional[float] = None
) -> AsymptoticDecision:
    """Cauchy test on decade increments c_j = ‖Φ(T - jD) - Φ(T - (j+1)D)‖."""
    floor = 100.0 * trajectory.tol if noise_floor is None else noise_floor
    T = trajectory.t_max
    marks = [T - j * DECADE for j in range(4) if T - j * DECADE >= 0.0]
    phis = trajectory.at(marks)
    inc = [float(np.linalg.norm(phis[j] - phis[j + 1], ord=2)) for j in range(len(marks) - 1)]
    if len(inc) >= 2 and inc[0] < margin and (inc[0] <= inc[1] or inc[0] < floor):
        result = Asymptotic.ASYMPTOTICALLY_CONSTANT
    elif len(inc) == 3 and all(c >= margin for c in inc):
        result = Asymptotic.NOT_ASYMPTOTICALLY_CONSTANT
    else:
        result = Asymptotic.INCONCLUSIVE
    return AsymptoticDecision(result, inc, phis[0])


def tail_trend(t: ArrayLike, f: ArrayLike, slack: float = 0.1) -> TailTrend:
    """Classify ∫^∞ f dt from the sampled tail t ≥ T/2.

    Single-signed tails are fitted by |f| ~ t^{-p}: p > 1 + slack converges,
    p < 1 - slack diverges in the direction of the sign. Sign-changing tails
    converge when their envelope shrinks.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    keep = t >= 0.5 * t[-1]
    t, f = t[keep], f[keep]
    if np.max(np.abs(f)) < ZERO_LEVEL:
        return TailTrend.CONVERGENT
    live = np.abs(f) >= ZERO_LEVEL
    if np.any(f[live] > 0.0) and np.any(f[live] < 0.0):
        half = t.size // 2
        early, late = np.max(np.abs(f[:half])), np.max(np.abs(f[half:]))
        return TailTrend.CONVERGENT if late < early else TailTrend.UNDETERMINED
    if np.count_nonzero(live) < 3:
        return TailTrend.CONVERGENT
    slope = np.polyfit(np.log(t[live]), np.log(np.abs(f[live])), 1)[0]
    p = -float(slope)
    logger.debug("tail exponent p={:.4f}", p)
    if p > 1.0 + slack:
        return TailTrend.CONVERGENT
    if p < 1.0 - slack:
        return TailTrend.DIVERGENT_UP if np.all(f[live] > 0.0) else TailTrend.DIVERGENT_DOWN
    return TailTrend.UNDETERMINED


@dataclass(frozen=True)
class MuCriteria:
    cond1: CriterionOutcome
    cond2: CriterionOutcome
    integral_sup: float
    integral_tail: float
    growth: List[float] = field(default_factory=list)


def _sorted_in_t(system: ReducedSystem, values: FloatArray) -> Tuple[FloatArray, FloatArray]:
    order = np.argsort(system.t_grid)
    return system.t_grid[order], values[order]


def _bounded_integral_test(
    t: FloatArray, f: FloatArray, threshold: float, margin: float
) -> Tuple[CriterionOutcome, float, List[float]]:
    """Is sup_{s<t} ∫_s^t f bounded? Judged on exp of the running supremum."""
    integral = integrate.cumulative_trapezoid(f, t, initial=0.0)
    excursion = integral - np.minimum.accumulate(integral)
    running = np.maximum.accumulate(excursion)
    level = np.exp(np.minimum(running, 700.0))
    outcome, growth = _growth_outcome(t, level, threshold, margin)
    return outcome, float(running[-1]), growth


def _check_depth(t: FloatArray) -> None:
    decades = (float(t[-1]) - float(t[0])) / DECADE
    if decades < 4.0:
        raise GridTooShallow(f"grid spans {decades:.2f} decades, need 4")


def mu_criteria(
    system: ReducedSystem,
    k_threshold: float = 1.0e6,
    margin: float = 0.01,
    slack: float = 0.1,
) -> MuCriteria:
    """Sufficient conditions on μ(r) in place of the fundamental matrix.

    cond1: sup over r₁ < r₂ of ∫_{r₁}^{r₂} μ dρ/ρ stays bounded.
    cond2: ∫_r μ dρ/ρ → -∞ as r → 0.
    """
    if system.mu is None:
        system = mu_of(system)
    assert system.mu is not None
    t, mu = _sorted_in_t(system, system.mu)
    _check_depth(t)
    cond1, sup, growth = _bounded_integral_test(t, mu, k_threshold, margin)
    trend = tail_trend(t, mu, slack)
    cond2 = {
        TailTrend.DIVERGENT_DOWN: CriterionOutcome.SATISFIED,
        TailTrend.UNDETERMINED: CriterionOutcome.INCONCLUSIVE,
    }.get(trend, CriterionOutcome.VIOLATED)
    half = t >= 0.5 * t[-1]
    tail = float(integrate.trapezoid(mu[half], t[half]))
    logger.debug("mu criteria: cond1={} cond2={} (tail {})", cond1.value, cond2.value, trend.value)
    return MuCriteria(cond1, cond2, sup, tail, growth)


def scalar_criteria_2d(
    system: ReducedSystem,
    k_threshold: float = 1.0e6,
    margin: float = 0.01,
    slack: float = 0.1,
) -> Tuple[CriterionOutcome, CriterionOutcome]:
    """Planar closed-form criteria on the scalar R.

    Lipschitz: ∫_{r₁}^{r₂} R dρ/ρ bounded below uniformly.
    Differentiable: additionally ∫_0 R dρ/ρ converges or diverges to +∞.
    """
    if system.n != 2:
        raise WrongDimension(f"scalar criteria need n = 2, got n = {system.n}")
    t, R = _sorted_in_t(system, system.R[:, 0, 0])
    _check_depth(t)
    lipschitz, _, _ = _bounded_integral_test(t, -R, k_threshold, margin)
    if lipschitz != CriterionOutcome.SATISFIED:
        return lipschitz, lipschitz
    trend = tail_trend(t, R, slack)
    if trend in (TailTrend.CONVERGENT, TailTrend.DIVERGENT_UP):
        return lipschitz, CriterionOutcome.SATISFIED
    if trend == TailTrend.DIVERGENT_DOWN:
        return lipschitz, CriterionOutcome.VIOLATED
    return lipschitz, CriterionOutcome.INCONCLUSIVE


# --- classification ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Classification:
    verdict: RegularityVerdict
    system: ReducedSystem
    trajectory: FundamentalTrajectory
    assembled: Optional[AssembledSystem] = None


def _disagreements(
    stability: Stability,
    asymptotic: Asymptotic,
    mu: MuCriteria,
    scalar: Optional[Tuple[CriterionOutcome, CriterionOutcome]],
) -> List[str]:
    found = []
    sat, vio = CriterionOutcome.SATISFIED, CriterionOutcome.VIOLATED
    if mu.cond1 == sat and stability == Stability.NOT_UNIFORMLY_STABLE:
        found.append("mu-cond1 holds but the fundamental matrix is not uniformly stable")
    if scalar is not None:
        lip, diff = scalar
        if (lip == sat and stability == Stability.NOT_UNIFORMLY_STABLE) or (
            lip == vio and stability == Stability.UNIFORMLY_STABLE
        ):
            found.append(f"scalar Lipschitz criterion {lip.value} vs {stability.value}")
        if (diff == sat and asymptotic == Asymptotic.NOT_ASYMPTOTICALLY_CONSTANT) or (
            diff == vio and asymptotic == Asymptotic.ASYMPTOTICALLY_CONSTANT
        ):
            found.append(f"scalar differentiability criterion {diff.value} vs {asymptotic.value}")
    if mu.cond2 == sat and stability == Stability.NOT_UNIFORMLY_STABLE:
        found.append("mu-cond2 holds but the fundamental matrix is not uniformly stable")
    return found


def _regularity_from(stability: Stability, asymptotic: Asymptotic) -> Regularity:
    if stability == Stability.UNIFORMLY_STABLE:
        if asymptotic == Asymptotic.ASYMPTOTICALLY_CONSTANT:
            return Regularity.DIFFERENTIABLE
        return Regularity.LIPSCHITZ
    if stability == Stability.NOT_UNIFORMLY_STABLE:
        return Regularity.NO_GUARANTEE
    return Regularity.INCONCLUSIVE


def _decade_samples(system: ReducedSystem) -> List[Tuple[float, float]]:
    t = system.t_grid
    norms = np.linalg.norm(system.R, ord=2, axis=(1, 2))
    out = []
    for k in range(int(t.max() / DECADE) + 1):
        i = int(np.argmin(np.abs(t - k * DECADE)))
        out.append((float(system.r_grid[i]), float(norms[i])))
    return out


def _assemble_certified(
    a: CoefficientField, q: HalfSphereQuadrature, times: NDArray[np.float64], r_max: float
) -> Optional[AssembledSystem]:
    """First-order system on the part of the t-grid where the field was certified."""
    certified = times[times >= -np.log(r_max) - 1.0e-12]
    try:
        return assemble_system(a, q, certified, epsilon_of_t(a.modulus))
    except ReductionError as exc:
        logger.warning("{}: splitting not assembled: {}", a.label, exc)
        return None


def run_classification(
    a: CoefficientField, h: Optional[BoundaryGraph], config: RunConfig
) -> Classification:
    """Certify inputs, reduce, integrate, then decide regularity.

    μ-criteria and, for n = 2, the scalar criteria are corroborating
    evidence: they never override the fundamental-matrix path, but any
    disagreement with it turns the verdict Inconclusive.
    """
    n, grid, th = config.n, config.grid, config.thresholds
    q = build_quadrature(n, config.order)
    radii = dyadic_grid(grid.r_max, grid.dyadic_levels)
    a = validate_field(a, q, radii)
    flat = a
    if h is not None:
        validate_graph(h, radii)
        flat = validate_field(flatten(a, h, radii), q, radii)
    modulus = flat.modulus
    outside = not modulus.certified
    if outside:
        logger.warning("{}: modulus is not square-Dini; verdict forced Inconclusive", a.label)

    times = t_grid(grid.t_max, grid.t_step)
    system = mu_of(reduce_problem(a, h, q, np.exp(-times)))
    trajectory = fundamental_matrix(system, grid.t_max, th.tol, grid.pair_samples, grid.t_step)
    assembled = _assemble_certified(flat, q, times, grid.r_max)
    stability = uniform_stability(trajectory, th.k_threshold, th.margin)
    asymptotic = asymptotically_constant(trajectory, th.margin)
    mu = mu_criteria(system, th.k_threshold, th.margin, th.slack)
    scalar = scalar_criteria_2d(system, th.k_threshold, th.margin, th.slack) if n == 2 else None

    regularity = _regularity_from(stability.result, asymptotic.result)
    notes = []
    if (
        stability.result == Stability.UNIFORMLY_STABLE
        and asymptotic.result == Asymptotic.INCONCLUSIVE
    ):
        notes.append("asymptotic constancy borderline; reporting the Lipschitz conclusion")
    disagreements = _disagreements(stability.result, asymptotic.result, mu, scalar)
    if disagreements:
        logger.warning("criteria disagree for {}: {}", a.label, "; ".join(disagreements))
        regularity = Regularity.INCONCLUSIVE
    if outside:
        regularity = Regularity.INCONCLUSIVE
        notes.append("modulus fails square-Dini: outside theory")
    claim = (
        GRADIENT_CLAIM
        if regularity == Regularity.DIFFERENTIABLE and mu.cond2 == CriterionOutcome.SATISFIED
        else None
    )

    evidence = VerdictEvidence(
        provenance=system.provenance,
        k_stat=stability.k_stat,
        k_growth=stability.growth,
        asymptotic_increments=asymptotic.increments,
        mu_integral_sup=mu.integral_sup,
        mu_integral_tail=mu.integral_tail,
        cond1=mu.cond1,
        cond2=mu.cond2,
        scalar_lipschitz=scalar[0] if scalar else None,
        scalar_differentiable=scalar[1] if scalar else None,
        t_max=grid.t_max,
        tolerance=th.tol,
        k_threshold=th.k_threshold,
        margin=th.margin,
        delta=modulus.delta,
        dini_integral=modulus.dini_integral,
        outside_theory=outside,
        disagreements=disagreements,
        notes=notes,
        reduced_samples=_decade_samples(system),
    )
    verdict = RegularityVerdict(
        stability=stability.result,
        asymptotic=asymptotic.result,
        regularity=regularity,
        gradient_claim=claim,
        evidence=evidence,
    )
    logger.info("verdict for {}: {}", a.label, regularity.value)
    return Classification(verdict, system, trajectory, assembled)


def classify(
    a: CoefficientField, h: Optional[BoundaryGraph], config: RunConfig
) -> RegularityVerdict:
    return run_classification(a, h, config).verdict


def trajectory_frame(trajectory: FundamentalTrajectory, system: ReducedSystem) -> pd.DataFrame:
    """Rows (t, phi_norm, K_stat, mu) for plotting."""
    t = trajectory.t
    mu = system.mu if system.mu is not None else mu_of(system).mu
    assert mu is not None
    ts, mus = _sorted_in_t(system, mu)
    return pd.DataFrame(
        {
            "t": t,
            "phi_norm": np.linalg.norm(trajectory.phi, ord=2, axis=(1, 2)),
            "K_stat": np.interp(t, trajectory.k_times, trajectory.k_history),
            "mu": np.interp(t, ts, mus),
        }
    )


# --- forced system ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Forcing:
    """g = (g₁, g₂); each maps times (m,) to vectors (m, n-1)."""

    g1: VectorOfTime
    g2: VectorOfTime

    @classmethod
    def zero(cls, dim: int) -> "Forcing":
        return cls(lambda t: np.zeros((np.size(t), dim)), lambda t: np.zeros((np.size(t), dim)))

    def scaled(self, s: float) -> "Forcing":
        return Forcing(lambda t: s * self.g1(t), lambda t: s * self.g2(t))


@dataclass(frozen=True, eq=False)
class ForcedState:
    t: FloatArray
    phi: FloatArray
    psi: FloatArray
    alpha: float
    g1_l1: float
    c_alpha: float
    c_phi: float
    c_psi: float

    @property
    def sup_phi(self) -> float:
        return float(np.max(np.linalg.norm(self.phi, axis=1)))


def _weighted_tail(t: FloatArray, g: FloatArray, alpha: float) -> FloatArray:
    """F(t_i) = ∫_{t_i}^{T} g(s) e^{-α(s - t_i)} ds by a stable backward recursion."""
    out = np.zeros_like(g)
    for i in range(t.size - 2, -1, -1):
        h = t[i + 1] - t[i]
        decay = np.exp(-alpha * h)
        out[i] = decay * out[i + 1] + 0.5 * h * (g[i] + g[i + 1] * decay)
    return out


def integrate_forced(
    assembled: AssembledSystem,
    forcing: Forcing,
    phi0: ArrayLike,
    psi0: Optional[ArrayLike] = None,
    delta: float = 0.5,
    eps: Optional[Callable[[FloatArray], FloatArray]] = None,
    slack: float = 0.1,
) -> ForcedState:
    """Integrate d(φ,ψ)/dt + diag(0, -nI)(φ,ψ) + ℛ(t)(φ,ψ) = g and fit the bounds.

    Without ``psi0`` the bounded branch is selected by the two-point problem
    φ(0) = φ₀, ψ(T) = 0; with ``psi0`` it is an initial value problem.

    Raises:
        ForcingRejected: g₁ is not integrable or c_α is unbounded on the grid.
        IntegrationFailure: the solver failed.
    """
    n, d = assembled.n, assembled.dim
    t = assembled.t_grid
    T = float(t[-1])
    alpha = n - delta
    eps_fn = eps or (lambda s: np.interp(s, t, assembled.eps))
    spline = interpolate.CubicSpline(t, assembled.calR, axis=0)
    shift = np.zeros(2 * d)
    shift[d:] = n
    phi0 = np.asarray(phi0, dtype=float)

    g1 = np.atleast_2d(forcing.g1(t))
    g2 = np.atleast_2d(forcing.g2(t))
    g1_norm = np.linalg.norm(g1, axis=1)
    if tail_trend(t, g1_norm, slack) != TailTrend.CONVERGENT:
        raise ForcingRejected("g1 is not integrable on the horizon")
    g1_l1 = float(integrate.trapezoid(g1_norm, t))

    eps_vals = np.asarray(eps_fn(t), dtype=float)
    tail = _weighted_tail(t, np.linalg.norm(g2, axis=1), alpha)
    if np.any((eps_vals <= 0.0) & (tail > ZERO_LEVEL)):
        raise ForcingRejected("g2 is nonzero where ε vanishes")
    ratio = np.divide(tail, eps_vals, out=np.zeros_like(tail), where=eps_vals > 0.0)
    early, late = ratio[t <= 0.25 * T], ratio[(t > 0.25 * T) & (t <= 0.5 * T)]
    if early.size and late.size and late.max() > 2.0 * early.max() and late.max() > ZERO_LEVEL:
        raise ForcingRejected("e^{αt}∫|g2|e^{-αs}ds / ε(t) keeps growing")
    c_alpha = float(ratio.max())

    def rhs(s: ArrayLike, y: FloatArray) -> FloatArray:
        s = np.atleast_1d(s)
        y2 = y.reshape(2 * d, -1)
        R = spline(s)
        drive = np.concatenate([forcing.g1(s), forcing.g2(s)], axis=1).T
        return shift[:, None] * y2 - np.einsum("mij,jm->im", R, y2) + drive

    if psi0 is None:

        def bc(ya: FloatArray, yb: FloatArray) -> FloatArray:
            return np.concatenate([ya[:d] - phi0, yb[d:]])

        guess = np.zeros((2 * d, t.size))
        guess[:d] = phi0[:, None]
        sol = integrate.solve_bvp(rhs, bc, t, guess, tol=1.0e-8, max_nodes=200000)
        if not sol.success:
            raise IntegrationFailure(f"two-point problem failed: {sol.message}")
        y = sol.sol(t)
    else:
        y0 = np.concatenate([phi0, np.asarray(psi0, dtype=float)])
        ivp = integrate.solve_ivp(
            lambda s, v: rhs(s, v).ravel(),
            (0.0, T),
            y0,
            method="DOP853",
            t_eval=t,
            rtol=1.0e-10,
            atol=1.0e-13,
        )
        if not ivp.success:
            raise IntegrationFailure(f"forced integration failed: {ivp.message}")
        y = ivp.y

    phi, psi = y[:d].T, y[d:].T
    phi_abs = np.linalg.norm(phi, axis=1)
    psi_abs = np.linalg.norm(psi, axis=1)
    sup_phi = float(phi_abs.max())
    base = c_alpha + float(np.linalg.norm(phi0)) + g1_l1
    c_phi = sup_phi / base if base > 0.0 else 0.0
    future_sup = np.maximum.accumulate(phi_abs[::-1])[::-1]
    denom = eps_vals * (c_alpha + future_sup)
    mask = denom > 0.0
    c_psi = float(np.max(psi_abs[mask] / denom[mask])) if np.any(mask) else 0.0
    logger.debug("forced run: c_alpha={:.4g} c_phi={:.4g} c_psi={:.4g}", c_alpha, c_phi, c_psi)
    return ForcedState(
        t=t,
        phi=phi,
        psi=psi,
        alpha=alpha,
        g1_l1=g1_l1,
        c_alpha=c_alpha,
        c_phi=c_phi,
        c_psi=c_psi,
    )


__all__ = [
    "AsymptoticDecision",
    "Classification",
    "ForcedState",
    "Forcing",
    "FundamentalTrajectory",
    "MuCriteria",
    "StabilityDecision",
    "asymptotically_constant",
    "classify",
    "fundamental_matrix",
    "integrate_forced",
    "mu_criteria",
    "restart_from",
    "run_classification",
    "scalar_criteria_2d",
    "tail_trend",
    "trajectory_frame",
    "uniform_stability",
]
