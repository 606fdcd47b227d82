"""Half-sphere quadrature, mean-value integrals, the projection P and the
spectral decomposition u = u0(r) + ṽ(r)·x̃ + w.

Functions on the half-sphere are represented by :class:`SphericalFunction`,
an evaluator on Cartesian points x = rθ (arrays of shape ``(m, n)``) with an
optional analytic gradient. Gradients that are not supplied are taken by
central differences with one Richardson step.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import special

from shared.errors import EvaluationFailure, InvalidOrder, StepTooLarge, UnsupportedDimension
from shared.logger import logger

FloatArray = NDArray[np.float64]
Evaluator = Callable[[FloatArray], FloatArray]

SUPPORTED_DIMENSIONS = (2, 3, 4)
MIN_ORDER = 4
# extra Gauss-Legendre nodes for angle variables whose integrands are trig
# polynomials rather than algebraic ones (n=2 arc, n=4 third polar angle)
SPECTRAL_PAD = 24
RESIDUAL_FLOOR = 1.0e-8


def sphere_area(n: int) -> float:
    """|S^{n-1}| = 2π^{n/2} / Γ(n/2)."""
    return float(2.0 * np.pi ** (n / 2.0) / special.gamma(n / 2.0))


def half_sphere_area(n: int) -> float:
    return 0.5 * sphere_area(n)


@dataclass(frozen=True, eq=False)
class HalfSphereQuadrature:
    """Positive-weight rule on S^{n-1}_+ = {|θ| = 1, θ_n > 0}."""

    n: int
    nodes: FloatArray
    weights: FloatArray
    order: int

    @property
    def area(self) -> float:
        return half_sphere_area(self.n)

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    def mean(self, values: FloatArray) -> FloatArray:
        """Slashed integral over the nodes; ``values`` has the node axis first."""
        return np.tensordot(self.weights, values, axes=(0, 0)) / self.area

    def points(self, r: float) -> FloatArray:
        return r * self.nodes


def _gauss_legendre(count: int, lo: float, hi: float) -> tuple[FloatArray, FloatArray]:
    x, w = special.roots_legendre(count)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _sphere_s2(order: int, upper_only: bool) -> tuple[FloatArray, FloatArray]:
    """Gauss-Legendre in the polar cosine times an azimuthal trapezoid rule."""
    lo = 0.0 if upper_only else -1.0
    t, wt = _gauss_legendre(order // 2 + 1, lo, 1.0)
    m = order + 1
    phi = 2.0 * np.pi * np.arange(m) / m
    wphi = np.full(m, 2.0 * np.pi / m)
    tt, pp = np.meshgrid(t, phi, indexing="ij")
    rho = np.sqrt(1.0 - tt**2)
    nodes = np.column_stack([(rho * np.cos(pp)).ravel(), (rho * np.sin(pp)).ravel(), tt.ravel()])
    weights = np.outer(wt, wphi).ravel()
    return nodes, weights


def build_quadrature(n: int, order: int) -> HalfSphereQuadrature:
    """Build a half-sphere rule exact (to round-off) for polynomials of degree ≤ order.

    Args:
        n: ambient dimension, one of 2, 3, 4.
        order: polynomial exactness degree, at least 4.

    Raises:
        UnsupportedDimension: n outside {2, 3, 4}.
        InvalidOrder: order < 4.
    """
    if n not in SUPPORTED_DIMENSIONS:
        raise UnsupportedDimension(f"n={n} not in {SUPPORTED_DIMENSIONS}")
    if order < MIN_ORDER:
        raise InvalidOrder(f"order={order} < {MIN_ORDER}")

    if n == 2:
        phi, w = _gauss_legendre(order + SPECTRAL_PAD, 0.0, np.pi)
        nodes = np.column_stack([np.cos(phi), np.sin(phi)])
        weights = w
    elif n == 3:
        nodes, weights = _sphere_s2(order, upper_only=True)
    else:
        psi, wpsi = _gauss_legendre(order + SPECTRAL_PAD, 0.0, 0.5 * np.pi)
        s2, ws2 = _sphere_s2(order, upper_only=False)
        sin_psi = np.sin(psi)
        nodes = np.concatenate(
            [
                (sin_psi[:, None, None] * s2[None, :, :]).reshape(-1, 3),
                np.repeat(np.cos(psi), s2.shape[0])[:, None],
            ],
            axis=1,
        )
        weights = np.outer(wpsi * sin_psi**2, ws2).ravel()

    logger.debug("quadrature n={} order={} nodes={}", n, order, weights.shape[0])
    return HalfSphereQuadrature(n=n, nodes=nodes, weights=weights, order=order)


@dataclass(frozen=True, eq=False)
class SphericalFunction:
    """A real function evaluated at points x = rθ of the closed half-space."""

    evaluator: Evaluator
    gradient: Optional[Callable[[FloatArray], FloatArray]] = None
    smoothness: str = "C1"

    def __call__(self, x: FloatArray) -> FloatArray:
        try:
            values = np.asarray(self.evaluator(np.atleast_2d(x)), dtype=float)
        except Exception as exc:
            raise EvaluationFailure(f"evaluator raised {exc!r}") from exc
        if values.ndim == 0:
            values = np.full(np.atleast_2d(x).shape[0], float(values))
        if not np.all(np.isfinite(values)):
            raise EvaluationFailure("evaluator returned non-finite values")
        return values

    def on_sphere(self, q: HalfSphereQuadrature, r: float) -> FloatArray:
        return self(q.points(r))


def central_gradient(f: SphericalFunction, x: FloatArray, h: float) -> FloatArray:
    m, n = x.shape
    offsets = h * np.eye(n)
    pts = np.concatenate([x[:, None, :] + offsets[None], x[:, None, :] - offsets[None]], axis=1)
    vals = f(pts.reshape(-1, n)).reshape(m, 2 * n)
    return (vals[:, :n] - vals[:, n:]) / (2.0 * h)


def gradient_of(f: SphericalFunction, x: FloatArray, step: float = 1.0e-3) -> FloatArray:
    """Analytic gradient if the function has one, else Richardson-extrapolated differences."""
    x = np.atleast_2d(x)
    if f.gradient is not None:
        return np.asarray(f.gradient(x), dtype=float)
    return (4.0 * central_gradient(f, x, 0.5 * step) - central_gradient(f, x, step)) / 3.0


def mean_integral(q: HalfSphereQuadrature, f: SphericalFunction, r: float) -> float:
    """Mean value of f(rθ) over S^{n-1}_+."""
    if r <= 0.0:
        raise EvaluationFailure(f"radius must be positive, got {r}")
    return float(q.mean(f.on_sphere(q, r)))


def projection_moments(
    q: HalfSphereQuadrature, g: SphericalFunction, r: float
) -> tuple[float, FloatArray]:
    """(mean g, [mean θ_m g]_{m<n}) at radius r."""
    vals = g.on_sphere(q, r)
    return float(q.mean(vals)), q.mean(q.nodes[:, : q.n - 1] * vals[:, None])


def project_P(q: HalfSphereQuadrature, g: SphericalFunction, r: float) -> SphericalFunction:
    """P g = mean(g) + n Σ_{m<n} θ_m mean(θ_m g), returned as a function of θ = x/|x|."""
    n = q.n
    m0, mk = projection_moments(q, g, r)
    mk_full = np.append(mk, 0.0)

    def evaluator(x: FloatArray) -> FloatArray:
        theta = x / np.linalg.norm(x, axis=1, keepdims=True)
        return m0 + n * theta @ mk_full

    def gradient(x: FloatArray) -> FloatArray:
        rad = np.linalg.norm(x, axis=1, keepdims=True)
        theta = x / rad
        return n * (mk_full[None, :] - (theta @ mk_full)[:, None] * theta) / rad

    return SphericalFunction(evaluator, gradient)


def radial_moments(
    q: HalfSphereQuadrature, u: SphericalFunction, radii: FloatArray
) -> tuple[FloatArray, FloatArray]:
    """u0(r) = mean u(r·) and v_k(r) = (n/r) mean(u(rθ)θ_k) for each radius."""
    n = q.n
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    pts = radii[:, None, None] * q.nodes[None, :, :]
    vals = u(pts.reshape(-1, n)).reshape(radii.shape[0], q.size)
    u0 = vals @ q.weights / q.area
    first = (vals * q.weights[None, :]) @ q.nodes[:, : n - 1] / q.area
    return u0, n * first / radii[:, None]


@dataclass(frozen=True, eq=False)
class Decomposition:
    """u = u0(r) + ṽ(r)·x̃ + w, with w free of zeroth and first half-sphere moments."""

    q: HalfSphereQuadrature
    u: SphericalFunction
    r_grid: FloatArray
    u0_values: FloatArray
    vtilde_values: FloatArray

    def u0(self, r: FloatArray) -> FloatArray:
        return radial_moments(self.q, self.u, r)[0]

    def vtilde(self, r: FloatArray) -> FloatArray:
        return radial_moments(self.q, self.u, r)[1]

    @property
    def w(self) -> SphericalFunction:
        q, u = self.q, self.u

        def evaluator(x: FloatArray) -> FloatArray:
            u0, v = radial_moments(q, u, np.linalg.norm(x, axis=1))
            return u(x) - u0 - np.sum(v * x[:, : q.n - 1], axis=1)

        return SphericalFunction(evaluator)


def decompose(
    q: HalfSphereQuadrature, u: SphericalFunction, r_grid: Sequence[float]
) -> Decomposition:
    radii = np.asarray(r_grid, dtype=float)
    if np.any(radii <= 0.0) or np.any(np.diff(radii) <= 0.0):
        raise EvaluationFailure("r_grid must be positive and strictly increasing")
    u0, v = radial_moments(q, u, radii)
    return Decomposition(q=q, u=u, r_grid=radii, u0_values=u0, vtilde_values=v)


class OrthogonalityResiduals(NamedTuple):
    """mean θ_i∂_i f, mean ∂_j f and mean θ_jθ_i∂_i f.

    The j-components are reduced to their signed extreme.
    """

    radial: float
    tangential: float
    mixed: float


def _signed_extreme(v: FloatArray) -> float:
    return float(v[np.argmax(np.abs(v))]) if v.size else 0.0


def orthogonality_residuals(
    q: HalfSphereQuadrature, f: SphericalFunction, r: float, step: float = 1.0e-3
) -> OrthogonalityResiduals:
    """Residuals of the three mean integrals that vanish under the moment hypotheses.

    Raises:
        StepTooLarge: step and half-step residuals disagree by more than 10x.
    """
    n = q.n
    x = q.points(r)

    def residuals(h: float) -> FloatArray:
        grad = gradient_of(f, x, h)
        radial = np.sum(q.nodes * grad, axis=1)
        return np.array(
            [
                float(q.mean(radial)),
                _signed_extreme(q.mean(grad[:, : n - 1])),
                _signed_extreme(q.mean(q.nodes[:, : n - 1] * radial[:, None])),
            ]
        )

    fine = residuals(0.5 * step)
    if f.gradient is None:
        coarse = residuals(step)
        a = np.maximum(np.abs(coarse), RESIDUAL_FLOOR)
        b = np.maximum(np.abs(fine), RESIDUAL_FLOOR)
        if np.any(np.maximum(a, b) / np.minimum(a, b) > 10.0):
            raise StepTooLarge(f"finite differences unstable at step={step}, r={r}")
    return OrthogonalityResiduals(*(float(v) for v in fine))


@dataclass(frozen=True)
class EnergySplit:
    """Energy of u on the unit half-ball, split along u = u0 + ṽ·x̃ + w."""

    total: float
    radial: float
    w_energy: float
    lower_bound: float
    plain: float

    @property
    def identity_residual(self) -> float:
        return abs(self.total - self.radial - self.w_energy) / max(abs(self.total), 1.0e-300)

    @property
    def fitted_c(self) -> float:
        """Largest c with ∫|∇u|² ≥ c·(radial energy) + ∫|∇w|²."""
        return (self.total - self.w_energy) / self.plain if self.plain > 0.0 else float("inf")


def energy_split(
    q: HalfSphereQuadrature, u: SphericalFunction, radial_nodes: int = 24, step: float = 1.0e-4
) -> EnergySplit:
    n = q.n
    rj, wr = _gauss_legendre(radial_nodes, 0.0, 1.0)
    x = (rj[:, None, None] * q.nodes[None, :, :]).reshape(-1, n)
    grad = gradient_of(u, x, step).reshape(radial_nodes, q.size, n)
    vals = u(x).reshape(radial_nodes, q.size)
    theta = q.nodes[None, :, :]
    tt = q.nodes[:, : n - 1]

    d_radial = np.sum(theta * grad, axis=2)
    u0p = d_radial @ q.weights / q.area
    v = n * ((vals * q.weights) @ tt) / q.area / rj[:, None]
    vp = -v / rj[:, None] + n * ((d_radial * q.weights) @ tt) / q.area / rj[:, None]

    xt = rj[:, None, None] * tt[None, :, :]
    along = u0p[:, None] + np.einsum("jk,jik->ji", vp, xt)
    grad_w = grad - along[:, :, None] * theta
    grad_w[:, :, : n - 1] -= v[:, None, :]

    shell = wr * rj ** (n - 1)
    total = float(shell @ (np.sum(grad**2, axis=2) @ q.weights))
    w_energy = float(shell @ (np.sum(grad_w**2, axis=2) @ q.weights))

    vp2 = np.sum(vp**2, axis=1)
    v2 = np.sum(v**2, axis=1)
    cross = np.sum(vp * v, axis=1)
    area = q.area
    radial = area * float(shell @ (u0p**2 + rj**2 * vp2 / n + 2.0 * rj * cross / n + v2))
    lower = area * float(
        shell
        @ (
            u0p**2
            + rj**2 * (1.0 / n - n ** (-4.0 / 3.0)) * vp2
            + (1.0 - n ** (-2.0 / 3.0)) * v2
        )
    )
    plain = area * float(shell @ (u0p**2 + v2 + rj**2 * vp2))
    return EnergySplit(
        total=total, radial=radial, w_energy=w_energy, lower_bound=lower + w_energy, plain=plain
    )


def dyadic_grid(r_max: float, levels: int) -> FloatArray:
    """r_j = r_max 2^{-j}, j = 0..levels-1, returned increasing."""
    return np.asarray(r_max * 2.0 ** -np.arange(levels)[::-1], dtype=float)


def sphere_directions(dim: int, count: int = 64) -> FloatArray:
    """Deterministic unit vectors in R^dim (dim = 1, 2, 3) for sampling circles |x̃| = r."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        phi = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(phi), np.sin(phi)])
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    phi = np.pi * (1.0 + 5.0**0.5) * k
    rho = np.sqrt(1.0 - z**2)
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
