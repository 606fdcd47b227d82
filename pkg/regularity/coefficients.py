"""Moduli of continuity, coefficient fields and boundary graphs.

Every check here certifies a statement on the sampled grid, not a true
supremum. Validation returns a new, certified object; inputs are never
mutated.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from regularity.geometry import HalfSphereQuadrature, dyadic_grid, sphere_directions
from regularity.profiles import Modulus, RadialProfile
from shared.errors import (
    DimensionMismatch,
    EllipticityViolation,
    EvaluationFailure,
    NotMonotone,
    NotNormalized,
    NotSquareDini,
    OscillationViolation,
    VanishingConditionFailed,
)
from shared.logger import logger
from shared.types import BoundarySpec, FieldKind, ProblemSpec

FloatArray = NDArray[np.float64]
MatrixField = Callable[[FloatArray], FloatArray]

# d2/d1 for the harmonic tail ∫ds/s over [20, 30, 40]·ln 2
HARMONIC_RATIO = float(np.log(4.0 / 3.0) / np.log(3.0 / 2.0))
DINI_LEVELS = (20, 30, 40)
VANISHING_WINDOW = 1.0e-3
MATRIX_TOL = 1.0e-12


# --- moduli -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModulusOfContinuity:
    """ω on (0, 1], extended by ω(1) = δ for r > 1."""

    omega: Modulus
    kappa: float
    delta: float
    dini_integral: Optional[float]
    certified: bool = True
    label: str = ""

    def __call__(self, r: ArrayLike) -> FloatArray:
        r = np.asarray(r, dtype=float)
        inner = np.asarray(self.omega(np.clip(r, 0.0, 1.0)), dtype=float)
        return np.where(r > 1.0, self.delta, inner)


def _dini_partials(omega: Modulus) -> Tuple[float, ...]:
    def integrand(s: float) -> float:
        return float(omega(np.array([np.exp(-s)]))[0]) ** 2

    return tuple(
        integrate.quad(integrand, 0.0, m * np.log(2.0), limit=400, epsabs=1e-14, epsrel=1e-12)[0]
        for m in DINI_LEVELS
    )


def certify_modulus(
    omega: Modulus,
    kappa: float,
    grid: Optional[FloatArray] = None,
    *,
    label: str = "",
    strict: bool = True,
) -> ModulusOfContinuity:
    """Certify a square-Dini modulus with vanishing exponent κ.

    With ``strict=False`` a modulus that fails only the square-Dini test is
    returned uncertified instead of raising.

    Raises:
        NotMonotone: ω decreases somewhere on the grid.
        VanishingConditionFailed: ω(r) r^{κ-1} increases near 0.
        NotSquareDini: partial integrals keep growing like a divergent tail.
    """
    grid = np.logspace(-12.0, 0.0, 2000) if grid is None else np.asarray(grid, dtype=float)
    try:
        values = np.asarray(omega(grid), dtype=float)
    except Exception as exc:
        raise EvaluationFailure(f"modulus {label or '?'} raised {exc!r}") from exc
    if not np.all(np.isfinite(values)) or np.any(values < 0.0):
        raise NotMonotone(f"modulus {label} is negative or non-finite on the grid")
    scale = max(1.0, float(values.max()))
    if np.any(np.diff(values) < -1.0e-12 * scale):
        worst = int(np.argmin(np.diff(values)))
        raise NotMonotone(f"modulus {label} decreases near r={grid[worst]:.3e}", r=grid[worst])

    near = grid[grid <= VANISHING_WINDOW]
    scaled = values[: near.size] * near ** (kappa - 1.0)
    if scaled.size > 1 and np.any(np.diff(scaled) > 1.0e-9 * max(float(scaled.max()), 1e-300)):
        raise VanishingConditionFailed(f"ω(r) r^({kappa:g}-1) increases near 0 for {label}")

    i20, i30, i40 = _dini_partials(omega)
    d1, d2 = i30 - i20, i40 - i30
    logger.debug("dini partials {} d1={:.3e} d2={:.3e}", (i20, i30, i40), d1, d2)
    delta = float(np.asarray(omega(np.array([1.0])), dtype=float)[0])
    if d2 > 0.01 * i40 and d2 >= HARMONIC_RATIO * d1:
        if strict:
            raise NotSquareDini(f"∫ω²/r diverges for {label}", partials=(i20, i30, i40))
        logger.warning("modulus {} fails square-Dini; kept uncertified", label)
        return ModulusOfContinuity(omega, kappa, delta, None, certified=False, label=label)

    def integrand(s: float) -> float:
        return float(omega(np.array([np.exp(-s)]))[0]) ** 2

    value, _ = integrate.quad(integrand, 0.0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-11)
    return ModulusOfContinuity(omega, kappa, delta, float(value), certified=True, label=label)


@dataclass(frozen=True, eq=False)
class EpsilonOfT:
    """ε(t) = ω(e^{-t})."""

    modulus: ModulusOfContinuity

    def __call__(self, t: ArrayLike) -> FloatArray:
        return self.modulus(np.exp(-np.asarray(t, dtype=float)))

    def integral_sq(self, upper: float = np.inf) -> float:
        value, _ = integrate.quad(
            lambda t: float(self(t)) ** 2, 0.0, upper, limit=400, epsabs=1e-13, epsrel=1e-11
        )
        return float(value)


def epsilon_of_t(omega: ModulusOfContinuity) -> EpsilonOfT:
    return EpsilonOfT(omega)


def zero_modulus(kappa: float = 0.25) -> ModulusOfContinuity:
    return ModulusOfContinuity(
        lambda r: np.zeros_like(np.asarray(r, dtype=float)), kappa, 0.0, 0.0, label="zero"
    )


# --- coefficient fields -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoefficientField:
    n: int
    matrix: MatrixField
    modulus: ModulusOfContinuity
    lam: float = 1.0
    Lam: float = 1.0
    normalized: bool = True
    compactified: bool = False
    certified: bool = False
    identity: bool = False
    label: str = ""

    def __call__(self, x: FloatArray) -> FloatArray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        try:
            out = np.asarray(self.matrix(x), dtype=float)
        except Exception as exc:
            raise EvaluationFailure(f"coefficient field {self.label} raised {exc!r}") from exc
        if out.shape != (x.shape[0], self.n, self.n):
            raise EvaluationFailure(f"field {self.label} returned shape {out.shape}")
        if not np.all(np.isfinite(out)):
            raise EvaluationFailure(f"field {self.label} returned non-finite entries")
        return out


def _unit(x: FloatArray) -> FloatArray:
    r = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, r, out=np.zeros_like(x), where=r > 0.0)


def identity_field(n: int, kappa: float = 0.25) -> CoefficientField:
    def matrix(x: FloatArray) -> FloatArray:
        return np.broadcast_to(np.eye(n), (x.shape[0], n, n)).copy()

    return CoefficientField(n, matrix, zero_modulus(kappa), identity=True, label="identity")


def gs_field(
    n: int, profile: RadialProfile, kappa: float = 0.25, *, strict: bool = True
) -> CoefficientField:
    """a_ij = δ_ij + g(|x|) θ_i θ_j."""

    def matrix(x: FloatArray) -> FloatArray:
        theta = _unit(x)
        g = profile.g(np.linalg.norm(x, axis=1))
        return np.eye(n)[None, :, :] + g[:, None, None] * theta[:, :, None] * theta[:, None, :]

    modulus = certify_modulus(profile.modulus(kappa), kappa, label=profile.label, strict=strict)
    return CoefficientField(n, matrix, modulus, label=f"gs[{profile.label}]")


def constant_field(matrix: ArrayLike, kappa: float = 0.25) -> CoefficientField:
    const = np.asarray(matrix, dtype=float)
    n = const.shape[0]
    dev = float(np.max(np.abs(const - np.eye(n))))
    modulus = certify_modulus(lambda r: dev + 0.0 * np.asarray(r), kappa, strict=False)
    return CoefficientField(
        n,
        lambda x: np.broadcast_to(const, (x.shape[0], n, n)).copy(),
        modulus,
        normalized=dev <= MATRIX_TOL,
        identity=dev <= MATRIX_TOL,
        label="constant",
    )


def compactify(field: CoefficientField) -> CoefficientField:
    """Same field inside the unit ball, identity for |x| ≥ 1."""
    n, inner = field.n, field.matrix

    def matrix(x: FloatArray) -> FloatArray:
        out = np.asarray(inner(x), dtype=float).copy()
        outside = np.linalg.norm(x, axis=1) >= 1.0
        out[outside] = np.eye(n)
        return out

    return replace(field, matrix=matrix, compactified=True, label=f"{field.label}+compact")


def validate_field(
    a: CoefficientField,
    q: HalfSphereQuadrature,
    r_grid: Optional[Sequence[float]] = None,
    modulus: Optional[ModulusOfContinuity] = None,
) -> CoefficientField:
    """Certify normalization, ellipticity and oscillation on sampled spheres.

    Returns a copy with λ, Λ set to the extremal Rayleigh quotients seen.

    Raises:
        NotNormalized: |a(0) - I| > 1e-12.
        EllipticityViolation: the symmetric part loses positivity.
        OscillationViolation: max_ij |a_ij - δ_ij| > ω(r); worst (r, θ) in details.
    """
    n = a.n
    if n != q.n:
        raise DimensionMismatch(f"field n={n} but quadrature n={q.n}")
    modulus = modulus or a.modulus
    radii = dyadic_grid(0.5, 30) if r_grid is None else np.asarray(r_grid, dtype=float)

    origin = a(np.zeros((1, n)))[0]
    if np.max(np.abs(origin - np.eye(n))) > MATRIX_TOL:
        raise NotNormalized(f"a(0) differs from identity for {a.label}")

    lam, Lam = np.inf, -np.inf
    worst = (0.0, 0.0, np.zeros(n))
    for r in radii:
        mats = a(q.points(float(r)))
        eig = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, 1, 2)))
        lam, Lam = min(lam, float(eig[:, 0].min())), max(Lam, float(eig[:, -1].max()))
        if eig[:, 0].min() <= 0.0:
            i = int(np.argmin(eig[:, 0]))
            raise EllipticityViolation(
                f"{a.label} not elliptic at r={r:.3e}", r=float(r), theta=q.nodes[i].tolist()
            )
        dev = np.max(np.abs(mats - np.eye(n)), axis=(1, 2))
        excess = dev - float(modulus(r)) - MATRIX_TOL
        i = int(np.argmax(excess))
        if excess[i] > worst[0]:
            worst = (float(excess[i]), float(r), q.nodes[i])
    if worst[0] > 0.0:
        raise OscillationViolation(
            f"{a.label} oscillation exceeds ω by {worst[0]:.3e} at r={worst[1]:.3e}",
            r=worst[1],
            theta=worst[2].tolist(),
            excess=worst[0],
        )

    if a.compactified:
        for r in (1.0, 1.5, 2.0):
            mats = a(q.points(r))
            if np.max(np.abs(mats - np.eye(n))) > MATRIX_TOL:
                raise OscillationViolation(f"{a.label} is not the identity at |x|={r}", r=r)

    logger.info("field {} certified on grid: lam={:.6g} Lam={:.6g}", a.label, lam, Lam)
    return replace(a, modulus=modulus, lam=lam, Lam=Lam, certified=True)


# --- boundary graphs --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryGraph:
    """x_n = h(x̃); height and gradient act on arrays x̃ of shape (m, n-1)."""

    n: int
    height: Callable[[FloatArray], FloatArray]
    gradient: Callable[[FloatArray], FloatArray]
    modulus: ModulusOfContinuity
    label: str = ""


def radial_graph(n: int, profile: RadialProfile, kappa: float = 0.25) -> BoundaryGraph:
    def height(xt: FloatArray) -> FloatArray:
        return profile.height(np.linalg.norm(xt, axis=1))

    def gradient(xt: FloatArray) -> FloatArray:
        return profile.slope(np.linalg.norm(xt, axis=1))[:, None] * _unit(xt)

    modulus = certify_modulus(profile.slope_modulus(kappa), kappa, label=f"h:{profile.label}")
    return BoundaryGraph(n, height, gradient, modulus, label=f"radial[{profile.label}]")


def quadratic_graph(n: int, curvatures: Sequence[float], kappa: float = 0.25) -> BoundaryGraph:
    """h(x̃) = ½ Σ κ_i x_i²."""
    k = np.asarray(curvatures, dtype=float)
    if k.shape != (n - 1,):
        raise DimensionMismatch(f"quadratic graph needs {n - 1} curvatures, got {k.size}")
    top = float(np.max(np.abs(k)))
    modulus = certify_modulus(
        lambda r: top * np.power(np.asarray(r, dtype=float), 1.0 - kappa), kappa, label="h:quad"
    )
    return BoundaryGraph(
        n,
        lambda xt: 0.5 * np.sum(k * xt**2, axis=1),
        lambda xt: k * xt,
        modulus,
        label=f"quadratic{tuple(k.tolist())}",
    )


def graph_from_spec(spec: BoundarySpec, n: int, kappa: float = 0.25) -> BoundaryGraph:
    if spec.kappa is not None:
        return quadratic_graph(n, spec.kappa, kappa)
    assert spec.profile is not None
    return radial_graph(n, RadialProfile.from_spec(spec.profile), kappa)


def validate_graph(
    h: BoundaryGraph, r_grid: Optional[Sequence[float]] = None, directions: int = 64
) -> BoundaryGraph:
    """Check h(0) = 0, ∇̃h(0) = 0 and |∇̃h| ≤ ω(r) on sampled circles |x̃| = r."""
    dim = h.n - 1
    origin = np.zeros((1, dim))
    if abs(float(h.height(origin)[0])) > MATRIX_TOL or np.any(
        np.abs(h.gradient(origin)) > MATRIX_TOL
    ):
        raise NotNormalized(f"graph {h.label} does not vanish to first order at 0")
    dirs = sphere_directions(dim, directions)
    radii = dyadic_grid(0.5, 30) if r_grid is None else np.asarray(r_grid, dtype=float)
    for r in radii:
        slope = np.max(np.linalg.norm(h.gradient(r * dirs), axis=1))
        if slope > float(h.modulus(r)) + MATRIX_TOL:
            raise OscillationViolation(
                f"|∇h| exceeds ω at r={r:.3e} for {h.label}", r=float(r), excess=slope
            )
    return h


def _jacobian_bounds(h: BoundaryGraph, radii: FloatArray, directions: int) -> Tuple[float, float]:
    """Smallest and largest σ² of J over circles |ỹ| = r."""
    n = h.n
    dirs = sphere_directions(n - 1, directions)
    yt = np.concatenate([r * dirs for r in radii])
    jac = np.broadcast_to(np.eye(n), (yt.shape[0], n, n)).copy()
    jac[:, n - 1, : n - 1] = -h.gradient(yt)
    sigma = np.linalg.svd(jac, compute_uv=False)
    return float(sigma[:, -1].min() ** 2), float(sigma[:, 0].max() ** 2)


def flatten(
    a: CoefficientField,
    h: BoundaryGraph,
    r_grid: Optional[Sequence[float]] = None,
    directions: int = 64,
) -> CoefficientField:
    """Coefficients ã = J a Jᵀ in y-coordinates, x = (ỹ, y_n + h(ỹ)).

    J has identity rows except the last, which is (-∇̃h, 1). Since
    |x| ≤ (1 + δ_h)|y|, the entries of ã - I are bounded by
    (1 + √(n-1)·δ_h)²·ω_a((1 + δ_h)r) + (1 + δ_h)·ω_h(r), which is the
    modulus carried by the result. λ and Λ come from the extreme singular
    values of J on the sampled circles.
    """
    if a.n != h.n:
        raise DimensionMismatch(f"field n={a.n} but graph n={h.n}")
    n = a.n

    def matrix(y: FloatArray) -> FloatArray:
        yt = y[:, : n - 1]
        x = y.copy()
        x[:, n - 1] += h.height(yt)
        jac = np.broadcast_to(np.eye(n), (y.shape[0], n, n)).copy()
        jac[:, n - 1, : n - 1] = -h.gradient(yt)
        return jac @ a(x) @ np.swapaxes(jac, 1, 2)

    radii = dyadic_grid(0.5, 30) if r_grid is None else np.asarray(r_grid, dtype=float)
    s_min, s_max = _jacobian_bounds(h, radii, directions)
    delta_h = h.modulus.delta
    spread = (1.0 + np.sqrt(n - 1) * delta_h) ** 2
    omega_a, omega_h = a.modulus, h.modulus
    strict = a.modulus.certified and h.modulus.certified
    modulus = certify_modulus(
        lambda r: spread * omega_a((1.0 + delta_h) * np.asarray(r, dtype=float))
        + (1.0 + delta_h) * omega_h(r),
        min(omega_a.kappa, omega_h.kappa),
        label=f"flat[{a.label};{h.label}]",
        strict=strict,
    )
    logger.debug("flatten {}: σ² in [{:.6g}, {:.6g}]", h.label, s_min, s_max)
    return CoefficientField(
        n,
        matrix,
        modulus,
        lam=a.lam * s_min,
        Lam=a.Lam * s_max,
        normalized=a.normalized,
        label=f"flat[{a.label};{h.label}]",
    )


# --- named problems ---------------------------------------------------------


def build_problem(
    problem: ProblemSpec, n: int, kappa: float = 0.25
) -> Tuple[CoefficientField, Optional[BoundaryGraph]]:
    """Coefficient field and optional boundary graph named by a config.

    GS profiles that fail square-Dini come back with an uncertified modulus.
    """
    if problem.field == FieldKind.GS:
        assert problem.g is not None
        field = gs_field(n, RadialProfile.from_spec(problem.g), kappa, strict=False)
    else:
        field = identity_field(n, kappa)
    if problem.compactified:
        field = compactify(field)
    graph = graph_from_spec(problem.h, n, kappa) if problem.h is not None else None
    return field, graph


__all__ = [
    "BoundaryGraph",
    "CoefficientField",
    "EpsilonOfT",
    "ModulusOfContinuity",
    "build_problem",
    "certify_modulus",
    "compactify",
    "constant_field",
    "epsilon_of_t",
    "flatten",
    "graph_from_spec",
    "gs_field",
    "identity_field",
    "quadratic_graph",
    "radial_graph",
    "validate_field",
    "validate_graph",
    "zero_modulus",
]
