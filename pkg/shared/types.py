"""Shared type definitions and Pydantic models used across the package.

This module centralizes the enums, the JSON run configuration and the report
models so the numerical modules, the pipeline and the CLI share the same types.
"""
from __future__ import annotations

from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ProfileFamily(str, Enum):
    """Built-in radial profile families for g(r) and boundary graphs."""

    ZERO = "zero"
    POWER = "power"
    LOGPOW = "logpow"
    SINLOG = "sinlog"


class FieldKind(str, Enum):
    """Named coefficient problems addressable from a config."""

    IDENTITY = "identity"
    GS = "gs"
    CURVED = "curved"


class Provenance(str, Enum):
    """Which integrand produced a reduced matrix R."""

    HALFSPACE = "halfspace"
    CURVED = "curved"
    CURVED_LAPLACE = "curved-laplace"


class Stability(str, Enum):
    UNIFORMLY_STABLE = "UniformlyStable"
    NOT_UNIFORMLY_STABLE = "NotUniformlyStable"
    INCONCLUSIVE = "Inconclusive"


class Asymptotic(str, Enum):
    ASYMPTOTICALLY_CONSTANT = "AsymptoticallyConstant"
    NOT_ASYMPTOTICALLY_CONSTANT = "NotAsymptoticallyConstant"
    INCONCLUSIVE = "Inconclusive"


class Regularity(str, Enum):
    DIFFERENTIABLE = "DifferentiableAtZero"
    LIPSCHITZ = "LipschitzAtZero"
    NO_GUARANTEE = "NoGuarantee"
    INCONCLUSIVE = "Inconclusive"


class CriterionOutcome(str, Enum):
    """Three-valued outcome of a finite-horizon criterion."""

    SATISFIED = "satisfied"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"


class TailTrend(str, Enum):
    """Behaviour of ∫^∞ f dt judged from the sampled tail of f."""

    CONVERGENT = "convergent"
    DIVERGENT_UP = "divergent_up"
    DIVERGENT_DOWN = "divergent_down"
    UNDETERMINED = "undetermined"


class EmpiricalTrend(str, Enum):
    BOUNDED = "bounded"
    DIVERGING = "diverging"
    VANISHING = "vanishing"


class Agreement(str, Enum):
    CONSISTENT = "CONSISTENT"
    CONTRADICTION = "CONTRADICTION"


class SourceFamily(str, Enum):
    """Compactly supported source families for the kernel checks."""

    ZERO = "zero"
    QUADRUPOLE = "quadrupole"
    MIXED = "mixed"


class Command(str, Enum):
    CLASSIFY = "classify"
    VERIFY = "verify"
    KERNEL_CHECK = "kernel-check"
    SWEEP = "sweep"


# --- run configuration ------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProfileSpec(_Strict):
    """g-spec / h-spec: one of the built-in radial families."""

    family: ProfileFamily = ProfileFamily.ZERO
    c: float = Field(1.0, description="Amplitude; for GS fields this is the δ = ω(1) knob")
    gamma: float = Field(0.5, ge=0.0, description="Exponent of the power family")
    alpha: float = Field(0.75, gt=0.0, description="Log exponent of logpow/sinlog")
    sign: int = Field(1, description="Sign s of the logpow family")

    @field_validator("sign")
    @classmethod
    def _unit_sign(cls, v: int) -> int:
        if v not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        return v


class BoundarySpec(_Strict):
    """Boundary graph x_n = h(x̃): radial profile or anisotropic quadratic."""

    profile: Optional[ProfileSpec] = None
    kappa: Optional[List[float]] = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "BoundarySpec":
        if (self.profile is None) == (self.kappa is None):
            raise ValueError("boundary needs exactly one of 'profile' or 'kappa'")
        return self


class ProblemSpec(_Strict):
    field: FieldKind = FieldKind.IDENTITY
    g: Optional[ProfileSpec] = None
    h: Optional[BoundarySpec] = None
    compactified: bool = False

    @model_validator(mode="after")
    def _required_parts(self) -> "ProblemSpec":
        if self.field == FieldKind.GS and self.g is None:
            raise ValueError("gs field requires a g-spec")
        if self.field == FieldKind.CURVED and self.h is None:
            raise ValueError("curved problem requires an h-spec")
        return self


class GridSpec(_Strict):
    t_max: float = Field(40.0, ge=10.0, le=200.0)
    t_step: float = Field(0.1, gt=0.0, le=0.5)
    r_max: float = Field(0.5, gt=0.0, le=1.0, description="Largest radius of validation grids")
    dyadic_levels: int = Field(30, ge=4, le=60, description="r_j = r_max 2^-j, j < levels")
    pair_samples: int = Field(100, ge=10, le=141, description="Times used for K_stat pairs")


class Thresholds(_Strict):
    k_threshold: float = Field(1.0e6, gt=1.0)
    margin: float = Field(0.01, gt=0.0, lt=1.0)
    slack: float = Field(0.1, gt=0.0, lt=0.5)
    kappa: float = Field(0.25, gt=0.0, lt=1.0)
    forcing_delta: float = Field(0.5, gt=0.0, lt=2.0, description="δ in α = n − δ")
    tol: float = Field(1.0e-10, gt=0.0, le=1.0e-4)


class OracleSpec(_Strict):
    t_start: float = Field(2.0, ge=0.0)
    rtol: float = Field(1.0e-11, gt=0.0, le=1.0e-6)
    samples: int = Field(761, ge=50)


class SourceSpec(_Strict):
    family: SourceFamily = SourceFamily.QUADRUPOLE
    amplitude: float = 1.0
    r_in: float = Field(1.0, gt=0.0)
    r_out: float = Field(2.0, gt=0.0)
    vector: bool = False

    @model_validator(mode="after")
    def _ordered(self) -> "SourceSpec":
        if self.r_out <= self.r_in:
            raise ValueError("source support needs r_in < r_out")
        return self


class KernelSpec(_Strict):
    truncation: int = Field(12, ge=2, le=12)
    ratio: float = Field(0.3, gt=0.0, lt=1.0)
    series_tol: float = Field(1.0e-6, gt=0.0)
    p: float = Field(4.0, ge=2.0)
    r_min: float = Field(1.0e-4, gt=0.0)
    r_max: float = Field(0.25, gt=0.0)
    points_per_decade: int = Field(2, ge=1, le=10)
    outer_factor: float = Field(4.0, gt=1.25, description="Last outer radius over r_out")
    outer_points: int = Field(3, ge=0, le=10)
    source: SourceSpec = Field(default_factory=SourceSpec)


class SweepSpec(_Strict):
    parameter: str = Field(..., description="Dotted RunConfig path, e.g. problem.g.alpha")
    values: List[float] = Field(..., min_length=1)
    workers: int = Field(2, ge=1, le=64)


class RunConfig(_Strict):
    """Everything a run needs; echoed verbatim into its report."""

    problem: ProblemSpec = Field(default_factory=ProblemSpec)
    n: int = Field(2, ge=2, le=4)
    order: int = Field(16, ge=4, le=64)
    grid: GridSpec = Field(default_factory=GridSpec)
    thresholds: Thresholds = Field(default_factory=Thresholds)
    oracle: OracleSpec = Field(default_factory=OracleSpec)
    kernel: KernelSpec = Field(default_factory=KernelSpec)
    sweep: Optional[SweepSpec] = None
    output_dir: Optional[str] = None
    seed: int = Field(0, ge=0)


# --- verdicts and reports ---------------------------------------------------


class VerdictEvidence(BaseModel):
    provenance: Provenance
    k_stat: float
    k_growth: List[float] = Field(default_factory=list, description="Last-decade growth")
    asymptotic_increments: List[float] = Field(default_factory=list)
    mu_integral_sup: float
    mu_integral_tail: float
    cond1: CriterionOutcome
    cond2: CriterionOutcome
    scalar_lipschitz: Optional[CriterionOutcome] = None
    scalar_differentiable: Optional[CriterionOutcome] = None
    t_max: float
    tolerance: float
    k_threshold: float
    margin: float
    delta: float = Field(..., description="ω(1) of the certified modulus")
    dini_integral: Optional[float] = None
    outside_theory: bool = False
    disagreements: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
    reduced_samples: List[Tuple[float, float]] = Field(
        default_factory=list, description="(r, ‖R(r)‖) at one radius per decade"
    )


class RegularityVerdict(BaseModel):
    stability: Stability
    asymptotic: Asymptotic
    regularity: Regularity
    gradient_claim: Optional[str] = None
    evidence: VerdictEvidence


class EmpiricalRegularity(BaseModel):
    lipschitz_quotient: float
    trend: EmpiricalTrend
    derivative_estimate: Optional[float] = None
    slopes: List[float] = Field(default_factory=list, description="d ln ρ/dt per decade")


class AdjudicationReport(BaseModel):
    agreement: Agreement
    reason: str
    verdict: RegularityVerdict
    empirical: EmpiricalRegularity


class KernelCheckSummary(BaseModel):
    name: str
    passed: bool
    value: float
    detail: str = ""


class SweepRow(BaseModel):
    value: float
    stability: Optional[Stability] = None
    asymptotic: Optional[Asymptotic] = None
    regularity: Optional[Regularity] = None
    k_stat: Optional[float] = None
    error: Optional[str] = None


class Report(BaseModel):
    command: Command
    version: str
    config: RunConfig
    verdict: Optional[RegularityVerdict] = None
    adjudication: Optional[AdjudicationReport] = None
    kernel_checks: List[KernelCheckSummary] = Field(default_factory=list)
    sweep: List[SweepRow] = Field(default_factory=list)
    artifacts: List[str] = Field(default_factory=list)
    exit_code: int = 0
