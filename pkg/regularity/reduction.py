"""Spherical moments of a coefficient field and the reduced dynamical system.

Two products come out of this module:

* :class:`ReducedSystem` holds the (n-1)x(n-1) matrix R(r) that drives
  Φ' = -R(e^{-t})Φ, together with S = -(R+Rᵀ)/2 and its top eigenvalue μ.
* :class:`AssembledSystem` holds the exact 2(n-1) first-order system
  dV/dt + M(t)V = 0 for V = (ṽ, V₂). It is solved from the linear relation
  between V̇ and V, never expanded asymptotically. It also holds the
  splitting M = M∞ + S₁ + S₂ and the (φ, ψ) form ℛ = J⁻¹(M - M∞)J.

All norms are operator 2-norms.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from regularity.coefficients import BoundaryGraph, CoefficientField, EpsilonOfT, flatten
from regularity.geometry import HalfSphereQuadrature
from shared.errors import DimensionMismatch, NonInvertibleA, SingularMass
from shared.logger import logger
from shared.types import Provenance

FloatArray = NDArray[np.float64]
MatrixOfRadius = Callable[[FloatArray], FloatArray]

COND_LIMIT = 1.0e12


@dataclass(frozen=True)
class SphericalMoments:
    r: float
    alpha: float
    beta: FloatArray
    gamma: FloatArray
    A: FloatArray
    B: FloatArray
    C: FloatArray


def _field_on_spheres(
    a: CoefficientField, q: HalfSphereQuadrature, radii: FloatArray
) -> FloatArray:
    if a.n != q.n:
        raise DimensionMismatch(f"field n={a.n} but quadrature n={q.n}")
    n = q.n
    pts = radii[:, None, None] * q.nodes[None, :, :]
    return a(pts.reshape(-1, n)).reshape(radii.shape[0], q.size, n, n)


def moment_batch(
    a: CoefficientField, q: HalfSphereQuadrature, radii: ArrayLike
) -> Dict[str, FloatArray]:
    """α, β̃, γ̃, A, B, C stacked over radii (leading axis)."""
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    n = q.n
    mats = _field_on_spheres(a, q, radii)
    theta = q.nodes
    tt = theta[:, : n - 1]
    w = q.weights / q.area

    a_theta = np.einsum("mpij,pj->mpi", mats, theta)
    quad_form = np.einsum("mpi,pi->mp", a_theta, theta)
    theta_a = np.einsum("mpij,pi->mpj", mats, theta)
    return {
        "alpha": quad_form @ w,
        "beta": np.einsum("mp,pk,p->mk", quad_form, tt, w),
        "gamma": np.einsum("mpj,p->mj", theta_a[:, :, : n - 1], w),
        "A": np.einsum("mp,pl,pk,p->mlk", quad_form, tt, tt, w),
        "B": np.einsum("mpl,pk,p->mlk", a_theta[:, :, : n - 1], tt, w),
        "C": np.einsum("mplk,p->mlk", mats[:, :, : n - 1, : n - 1], w),
    }


def moments(a: CoefficientField, q: HalfSphereQuadrature, r: float) -> SphericalMoments:
    m = moment_batch(a, q, [r])
    return SphericalMoments(
        r=r,
        alpha=float(m["alpha"][0]),
        beta=m["beta"][0],
        gamma=m["gamma"][0],
        A=m["A"][0],
        B=m["B"][0],
        C=m["C"][0],
    )


# --- reduced matrix R ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """R sampled on ``r_grid`` plus an exact evaluator for off-grid radii."""

    n: int
    r_grid: FloatArray
    R: FloatArray
    provenance: Provenance
    evaluator: MatrixOfRadius
    S: Optional[FloatArray] = None
    mu: Optional[FloatArray] = None

    @property
    def t_grid(self) -> FloatArray:
        return -np.log(self.r_grid)

    def R_at(self, r: ArrayLike) -> FloatArray:
        return self.evaluator(np.atleast_1d(np.asarray(r, dtype=float)))

    def R_of_t(self, t: ArrayLike) -> FloatArray:
        return self.R_at(np.exp(-np.atleast_1d(np.asarray(t, dtype=float))))

    @classmethod
    def from_callable(
        cls,
        fn: MatrixOfRadius,
        n: int,
        r_grid: ArrayLike,
        provenance: Provenance = Provenance.HALFSPACE,
    ) -> "ReducedSystem":
        """Wrap a closed-form R(r) returning shape (m, n-1, n-1)."""
        radii = np.asarray(r_grid, dtype=float)
        return cls(n=n, r_grid=radii, R=fn(radii), provenance=provenance, evaluator=fn)


def t_grid(t_max: float, t_step: float) -> FloatArray:
    count = int(round(t_max / t_step)) + 1
    return np.linspace(0.0, t_max, count)


def _as_radii(r_grid: Sequence[float]) -> FloatArray:
    radii = np.asarray(r_grid, dtype=float)
    if np.any(radii <= 0.0):
        raise ValueError("radii must be positive")
    return radii


def _R_halfspace_batch(
    a: CoefficientField, q: HalfSphereQuadrature, radii: FloatArray
) -> FloatArray:
    n = q.n
    mats = _field_on_spheres(a, q, radii)
    tt = q.nodes[:, : n - 1]
    row = np.einsum("mplj,pj->mpl", mats[:, :, : n - 1, :], q.nodes)
    integrand = mats[:, :, : n - 1, : n - 1] - n * row[:, :, :, None] * tt[None, :, None, :]
    return np.einsum("mplk,p->mlk", integrand, q.weights) / q.area


def compute_R_halfspace(
    a: CoefficientField, q: HalfSphereQuadrature, r_grid: Sequence[float]
) -> ReducedSystem:
    """R_ℓk(r) = mean(a_ℓk - n Σ_j a_ℓj θ_j θ_k) over S^{n-1}_+."""
    radii = _as_radii(r_grid)
    R = _R_halfspace_batch(a, q, radii)
    logger.debug("R halfspace for {}: max |R| = {:.3e}", a.label, float(np.abs(R).max()))
    return ReducedSystem(
        n=q.n,
        r_grid=radii,
        R=R,
        provenance=Provenance.HALFSPACE,
        evaluator=lambda r: _R_halfspace_batch(a, q, r),
    )


def compute_R_dim2(
    a: CoefficientField, q: HalfSphereQuadrature, r_grid: Sequence[float]
) -> FloatArray:
    """Planar form R = mean(a₁₁ - 2a₁₁cos²φ - 2a₁₂ cosφ sinφ), shape (m,)."""
    if q.n != 2:
        raise DimensionMismatch("the planar formula needs n = 2")
    radii = _as_radii(r_grid)
    mats = _field_on_spheres(a, q, radii)
    c, s = q.nodes[:, 0], q.nodes[:, 1]
    integrand = mats[:, :, 0, 0] * (1.0 - 2.0 * c**2) - 2.0 * mats[:, :, 0, 1] * c * s
    return np.asarray(integrand @ q.weights / q.area)


def _R_curved_batch(
    a: CoefficientField, h: BoundaryGraph, q: HalfSphereQuadrature, radii: FloatArray
) -> FloatArray:
    n = q.n
    y = (radii[:, None, None] * q.nodes[None, :, :]).reshape(-1, n)
    yt = y[:, : n - 1]
    x = y.copy()
    x[:, n - 1] += h.height(yt)
    mats = a(x).reshape(radii.shape[0], q.size, n, n)
    grad = h.gradient(yt).reshape(radii.shape[0], q.size, n - 1)
    theta = q.nodes
    tt = theta[:, : n - 1]
    row = np.einsum("mplj,pj->mpl", mats[:, :, : n - 1, :], theta)
    slope = np.einsum("mplj,mpj->mpl", mats[:, :, : n - 1, : n - 1], grad)
    integrand = (
        mats[:, :, : n - 1, : n - 1]
        - n * row[:, :, :, None] * tt[None, :, None, :]
        + n * (slope * theta[None, :, n - 1, None])[:, :, :, None] * tt[None, :, None, :]
    )
    return np.einsum("mplk,p->mlk", integrand, q.weights) / q.area


def compute_R_curved(
    a: CoefficientField, h: BoundaryGraph, q: HalfSphereQuadrature, r_grid: Sequence[float]
) -> ReducedSystem:
    """R for the graph domain, integrand evaluated at x = (ỹ, y_n + h(ỹ)).

    Equals compute_R_halfspace(flatten(a, h)); with h ≡ 0 it is the half-space R.
    """
    if a.n != h.n or a.n != q.n:
        raise DimensionMismatch(f"field n={a.n}, graph n={h.n}, quadrature n={q.n}")
    radii = _as_radii(r_grid)
    return ReducedSystem(
        n=q.n,
        r_grid=radii,
        R=_R_curved_batch(a, h, q, radii),
        provenance=Provenance.CURVED,
        evaluator=lambda r: _R_curved_batch(a, h, q, r),
    )


def _R_laplace_batch(h: BoundaryGraph, q: HalfSphereQuadrature, radii: FloatArray) -> FloatArray:
    n = q.n
    y = (radii[:, None, None] * q.nodes[None, :, :]).reshape(-1, n)
    grad = h.gradient(y[:, : n - 1]).reshape(radii.shape[0], q.size, n - 1)
    tt = q.nodes[:, : n - 1]
    weight = q.weights * q.nodes[:, n - 1]
    return n * np.einsum("mpl,pk,p->mlk", grad, tt, weight) / q.area


def compute_R_curved_laplace(
    h: BoundaryGraph, q: HalfSphereQuadrature, r_grid: Sequence[float]
) -> ReducedSystem:
    """Laplacian on a graph domain: R_ℓk = n mean(∂_ℓh θ_n θ_k)."""
    if h.n != q.n:
        raise DimensionMismatch(f"graph n={h.n} but quadrature n={q.n}")
    radii = _as_radii(r_grid)
    return ReducedSystem(
        n=q.n,
        r_grid=radii,
        R=_R_laplace_batch(h, q, radii),
        provenance=Provenance.CURVED_LAPLACE,
        evaluator=lambda r: _R_laplace_batch(h, q, r),
    )


def reduce_problem(
    a: CoefficientField,
    h: Optional[BoundaryGraph],
    q: HalfSphereQuadrature,
    r_grid: Sequence[float],
) -> ReducedSystem:
    """Pick the R integrand for a field with an optional boundary graph."""
    if h is None:
        return compute_R_halfspace(a, q, r_grid)
    if a.identity:
        return compute_R_curved_laplace(h, q, r_grid)
    return compute_R_curved(a, h, q, r_grid)


def mu_of(system: ReducedSystem) -> ReducedSystem:
    """Fill S = -(R+Rᵀ)/2 and μ = its largest eigenvalue."""
    S = -0.5 * (system.R + np.swapaxes(system.R, 1, 2))
    mu = np.linalg.eigvalsh(S)[:, -1]
    return replace(system, S=S, mu=mu)


# --- exact first-order system -------------------------------------------------


def _eye_blocks(d: int, blocks: Tuple[Tuple[float, float], Tuple[float, float]]) -> FloatArray:
    eye = np.eye(d)
    return np.block(
        [
            [blocks[0][0] * eye, blocks[0][1] * eye],
            [blocks[1][0] * eye, blocks[1][1] * eye],
        ]
    )


def m_infinity(n: int) -> FloatArray:
    return _eye_blocks(n - 1, ((-1.0, float(n)), ((n - 1.0) / n, 1.0 - n)))


def diagonalizer(n: int) -> Tuple[FloatArray, FloatArray]:
    """J with J⁻¹ M∞ J = diag(0·I, -n·I), and its closed-form inverse."""
    J = _eye_blocks(n - 1, ((float(n), float(n)), (1.0, 1.0 - n)))
    J_inv = _eye_blocks(n - 1, (((n - 1.0) / n**2, 1.0 / n), (1.0 / n**2, -1.0 / n)))
    return J, J_inv


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    n: int
    t_grid: FloatArray
    M: FloatArray
    M_inf: FloatArray
    S1: FloatArray
    S2: FloatArray
    J: FloatArray
    J_inv: FloatArray
    calR: FloatArray
    R_ref: FloatArray
    eps: FloatArray
    c_s2: float
    c_r1: float

    @property
    def dim(self) -> int:
        return self.n - 1

    def blocks(self) -> Tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        d = self.dim
        R = self.calR
        return R[:, :d, :d], R[:, :d, d:], R[:, d:, :d], R[:, d:, d:]


def _fitted_constant(residual: FloatArray, eps: FloatArray) -> float:
    norms = np.linalg.norm(residual, ord=2, axis=(1, 2))
    mask = eps > 0.0
    if not np.any(mask):
        return float(norms.max()) if norms.size else 0.0
    return float(np.max(norms[mask] / eps[mask] ** 2))


def assemble_system(
    a: CoefficientField, q: HalfSphereQuadrature, t: Sequence[float], eps: EpsilonOfT
) -> AssembledSystem:
    """Exact M(t) on the t-grid, with the M∞ + S₁ + S₂ split and ℛ.

    With V₁ = ṽ and V₂ the co-normal flux, the relation reads
    Mass·V̇ = K·V where, writing Ã = A - ββᵀ/α, B' = B - βγᵀ/α,
    B'' = B - γβᵀ/α, C' = C - γγᵀ/α,

        Mass = [[Ã, 0], [-B'', I]],   K = [[B', -I], [-C', nI]],

    and M = -Mass⁻¹K.

    Raises:
        NonInvertibleA: cond(A) > 1e12 at some grid time.
        SingularMass: cond(Mass) > 1e12 at some grid time.
    """
    n = q.n
    d = n - 1
    tg = np.asarray(t, dtype=float)
    mom = moment_batch(a, q, np.exp(-tg))
    alpha, beta, gamma = mom["alpha"], mom["beta"], mom["gamma"]
    A, B, C = mom["A"], mom["B"], mom["C"]

    cond_a = np.linalg.cond(A)
    if np.any(~np.isfinite(cond_a)) or np.max(cond_a) > COND_LIMIT:
        i = int(np.nanargmax(np.where(np.isfinite(cond_a), cond_a, np.inf)))
        raise NonInvertibleA(f"cond(A) = {cond_a[i]:.3e} at t={tg[i]:.3g}", t=float(tg[i]))

    inv_alpha = (1.0 / alpha)[:, None, None]
    A_t = A - inv_alpha * np.einsum("mi,mj->mij", beta, beta)
    B_1 = B - inv_alpha * np.einsum("mi,mj->mij", beta, gamma)
    B_2 = B - inv_alpha * np.einsum("mi,mj->mij", gamma, beta)
    C_1 = C - inv_alpha * np.einsum("mi,mj->mij", gamma, gamma)

    m = tg.shape[0]
    eye = np.broadcast_to(np.eye(d), (m, d, d))
    zero = np.zeros((m, d, d))
    mass = np.concatenate(
        [np.concatenate([A_t, zero], axis=2), np.concatenate([-B_2, eye], axis=2)], axis=1
    )
    K = np.concatenate(
        [np.concatenate([B_1, -eye], axis=2), np.concatenate([-C_1, n * eye], axis=2)], axis=1
    )
    cond_mass = np.linalg.cond(mass)
    logger.debug("cond(A) max {:.3e}; cond(Mass) max {:.3e}", cond_a.max(), cond_mass.max())
    if np.max(cond_mass) > COND_LIMIT:
        i = int(np.argmax(cond_mass))
        raise SingularMass(f"cond(Mass) = {cond_mass[i]:.3e} at t={tg[i]:.3g}", t=float(tg[i]))
    M = -np.linalg.solve(mass, K)

    A_inv = np.linalg.inv(A)
    BA = B @ A_inv
    S1 = np.concatenate(
        [
            np.concatenate([eye - A_inv @ B, A_inv - n * eye], axis=2),
            np.concatenate([C - BA @ B + (1.0 - n) / n * eye, BA - eye], axis=2),
        ],
        axis=1,
    )
    M_inf = m_infinity(n)
    S2 = M - M_inf[None] - S1
    J, J_inv = diagonalizer(n)
    calR = J_inv[None] @ (M - M_inf[None]) @ J[None]
    R_ref = C - n * B
    eps_vals = np.asarray(eps(tg), dtype=float)

    c_s2 = _fitted_constant(S2, eps_vals)
    c_r1 = _fitted_constant(calR[:, :d, :d] - R_ref, eps_vals)
    logger.debug("fitted constants for {}: S2 {:.3g}, R1 {:.3g}", a.label, c_s2, c_r1)
    return AssembledSystem(
        n=n,
        t_grid=tg,
        M=M,
        M_inf=M_inf,
        S1=S1,
        S2=S2,
        J=J,
        J_inv=J_inv,
        calR=calR,
        R_ref=R_ref,
        eps=eps_vals,
        c_s2=c_s2,
        c_r1=c_r1,
    )


def reduction_frame(
    system: ReducedSystem, assembled: Optional[AssembledSystem] = None
) -> pd.DataFrame:
    """Per-grid-point rows (t, r, mu, R_norm, S1_norm, S2_over_eps2).

    The splitting columns are matched to the system rows by t; rows the
    assembled system does not cover stay NaN.
    """
    if system.mu is None:
        system = mu_of(system)
    assert system.mu is not None
    frame = pd.DataFrame(
        {
            "t": system.t_grid,
            "r": system.r_grid,
            "mu": system.mu,
            "R_norm": np.linalg.norm(system.R, ord=2, axis=(1, 2)),
        }
    )
    if assembled is None or assembled.t_grid.size == 0:
        frame["S1_norm"] = np.nan
        frame["S2_over_eps2"] = np.nan
        return frame
    s2 = np.linalg.norm(assembled.S2, ord=2, axis=(1, 2))
    eps2 = assembled.eps**2
    split = pd.DataFrame(
        {
            "t": assembled.t_grid,
            "S1_norm": np.linalg.norm(assembled.S1, ord=2, axis=(1, 2)),
            "S2_over_eps2": np.divide(s2, eps2, out=np.zeros_like(s2), where=eps2 > 0.0),
        }
    )
    order = np.argsort(frame["t"].to_numpy(), kind="stable")
    merged = pd.merge_asof(
        frame.iloc[order].reset_index(drop=True),
        split.sort_values("t"),
        on="t",
        direction="nearest",
        tolerance=1.0e-9,
    )
    return merged.set_index(order).sort_index().rename_axis(None)
