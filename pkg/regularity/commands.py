"""Subcommand implementations.

Each subcommand is a ``cmd_<name>`` function taking a :class:`RunContext` and
returning a :class:`Report` with its exit code set; the CLI looks them up by
that naming convention. Artifacts are written into the context's output
directory and listed in the report.
"""
from __future__ import annotations

from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike
from pydantic import ValidationError

from regularity import __version__
from regularity.artifacts import write_frame
from regularity.coefficients import build_problem
from regularity.geometry import build_quadrature
from regularity.kernel import (
    KernelConfig,
    coefficient_table,
    grad_x_N,
    kernel_radii,
    neumann_N,
    prop1_check,
    projection_crosscheck,
    projection_residual,
    series_error_bound,
    series_N,
    source_from_spec,
    source_quadrature,
    uniqueness_exponent_ok,
)
from regularity.oracle import adjudicate, measure_regularity, run_oracle
from regularity.profiles import RadialProfile
from regularity.reduction import reduction_frame
from regularity.stability import run_classification, trajectory_frame
from shared.errors import ConfigInvalid, RegularityError
from shared.logger import logger
from shared.types import (
    Agreement,
    Command,
    FieldKind,
    KernelCheckSummary,
    ProfileSpec,
    Regularity,
    Report,
    RunConfig,
    SweepRow,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONTRADICTION = 2
EXIT_INCONCLUSIVE = 3

SERIES_TOL = 1.0e-8
PN_TOL = 1.0e-8
REFLECTION_TOL = 1.0e-10
PW_TOL = 1.0e-6


@dataclass(frozen=True)
class RunContext:
    config: RunConfig
    out_dir: Path
    decisive: bool = False


def _inconclusive_exit(ctx: RunContext, regularity: Regularity) -> int:
    if ctx.decisive and regularity == Regularity.INCONCLUSIVE:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# --- classify ---------------------------------------------------------------


def cmd_classify(ctx: RunContext) -> Report:
    config = ctx.config
    field, graph = build_problem(config.problem, config.n, config.thresholds.kappa)
    result = run_classification(field, graph, config)
    trajectory = trajectory_frame(result.trajectory, result.system)
    reduction = reduction_frame(result.system, result.assembled)
    artifacts = [
        write_frame(ctx.out_dir, "trajectory.csv", trajectory),
        write_frame(ctx.out_dir, "reduction.csv", reduction),
    ]
    return Report(
        command=Command.CLASSIFY,
        version=__version__,
        config=config,
        verdict=result.verdict,
        artifacts=artifacts,
        exit_code=_inconclusive_exit(ctx, result.verdict.regularity),
    )


# --- verify -----------------------------------------------------------------


def _oracle_profile(config: RunConfig) -> RadialProfile:
    problem = config.problem
    if config.n != 2 or problem.h is not None:
        raise ConfigInvalid("verify needs a flat n = 2 problem", module="cli")
    if problem.field == FieldKind.GS:
        assert problem.g is not None
        return RadialProfile.from_spec(problem.g)
    if problem.field == FieldKind.IDENTITY:
        return RadialProfile.from_spec(ProfileSpec())
    raise ConfigInvalid(f"verify has no oracle for field '{problem.field.value}'", module="cli")


def cmd_verify(ctx: RunContext) -> Report:
    config = ctx.config
    profile = _oracle_profile(config)
    field, graph = build_problem(config.problem, config.n, config.thresholds.kappa)
    result = run_classification(field, graph, config)
    run = run_oracle(profile, config.grid.t_max, config.oracle)
    report = adjudicate(result.verdict, measure_regularity(run))
    trajectory = trajectory_frame(result.trajectory, result.system)
    artifacts = [
        write_frame(ctx.out_dir, "trajectory.csv", trajectory),
        write_frame(ctx.out_dir, "oracle.csv", run.frame()),
    ]
    if report.agreement == Agreement.CONTRADICTION:
        exit_code = EXIT_CONTRADICTION
    else:
        exit_code = _inconclusive_exit(ctx, result.verdict.regularity)
    return Report(
        command=Command.VERIFY,
        version=__version__,
        config=config,
        verdict=result.verdict,
        adjudication=report,
        artifacts=artifacts,
        exit_code=exit_code,
    )


# --- kernel-check -----------------------------------------------------------


def _unit(v: ArrayLike) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    return a / np.linalg.norm(a)


def _axis_pair(n: int, ratio: float) -> Tuple[np.ndarray, np.ndarray]:
    """x̂ = e1 and ŷ with x̂·ŷ = x̂·ŷ* = 0, so odd-degree terms drop out."""
    x = np.zeros(n)
    x[0] = ratio
    y = np.zeros(n)
    y[-2], y[-1] = 0.6, 0.8
    return x, y


def _random_pairs(
    n: int, ratio: float, count: int, seed: int
) -> List[Tuple[np.ndarray, np.ndarray]]:
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        dx, dy = rng.normal(size=n), rng.normal(size=n)
        dx[-1], dy[-1] = abs(dx[-1]), abs(dy[-1])
        pairs.append((ratio * _unit(dx), _unit(dy)))
    return pairs


def _kernel_checks(
    ctx: RunContext,
) -> Tuple[List[KernelCheckSummary], Dict[str, pd.DataFrame]]:
    config = ctx.config
    spec = config.kernel
    cfg = KernelConfig.from_spec(config.n, spec)
    n = cfg.n
    checks: List[KernelCheckSummary] = []

    x, y = _axis_pair(n, spec.ratio)
    err = abs(series_N(cfg, x, y) - float(neumann_N(n, x, y)))
    checks.append(
        KernelCheckSummary(
            name="series-direct",
            passed=err < SERIES_TOL,
            value=err,
            detail=f"ratio={spec.ratio:g}",
        )
    )

    excess = 0.0
    for xr, yr in _random_pairs(n, spec.ratio, 20, config.seed):
        gap = abs(series_N(cfg, xr, yr) - float(neumann_N(n, xr, yr)))
        excess = max(excess, gap - series_error_bound(cfg, xr, yr))
    checks.append(
        KernelCheckSummary(
            name="series-bound", passed=excess <= 1.0e-12, value=excess, detail="20 random pairs"
        )
    )

    q = build_quadrature(n, config.order)
    xp = 0.3 * _unit([0.6] + [0.0] * (n - 2) + [0.8])
    pn_err = max(projection_crosscheck(cfg, xp, rho, q) for rho in (1.0, 0.05))
    checks.append(
        KernelCheckSummary(
            name="PN-projection", passed=pn_err < PN_TOL, value=pn_err, detail="|y| = 1 and 0.05"
        )
    )

    rng = np.random.default_rng(config.seed)
    xb = rng.uniform(-1.0, 1.0, size=(1000, n))
    xb[:, -1] = 0.0
    yb = rng.uniform(-1.0, 1.0, size=(1000, n))
    yb[:, -1] = rng.uniform(0.1, 1.0, size=1000)
    grad = grad_x_N(n, xb, yb)
    refl = float(np.max(np.abs(grad[:, -1]) / np.linalg.norm(grad, axis=1)))
    checks.append(
        KernelCheckSummary(
            name="reflection",
            passed=refl < REFLECTION_TOL,
            value=refl,
            detail="1000 boundary points",
        )
    )

    src = source_from_spec(spec.source, n)
    sq = source_quadrature(src, n)
    pw = projection_residual(cfg, src, (0.1, 0.2), q, sq)
    checks.append(
        KernelCheckSummary(name="Pw-residual", passed=pw < PW_TOL, value=pw, detail=src.label)
    )

    estimate = prop1_check(cfg, src, spec.p, kernel_radii(spec))
    checks.append(
        KernelCheckSummary(
            name="annulus-estimate",
            passed=estimate.passed,
            value=estimate.c,
            detail=f"refined c={estimate.c_refined:.4g}, {estimate.decades:.2f} decades",
        )
    )

    ok = uniqueness_exponent_ok(float(n), n, spec.p)
    checks.append(
        KernelCheckSummary(
            name="uniqueness-exponent",
            passed=ok,
            value=n * (spec.p - 2.0) / (2.0 * spec.p),
            detail=f"alpha={n} against the threshold",
        )
    )

    frames = {
        "coefficients.csv": coefficient_table(cfg),
        "kernel_estimate.csv": pd.DataFrame(
            {
                "r": estimate.radii,
                "lhs": estimate.lhs,
                "near": estimate.near,
                "far": estimate.far,
                "rhs": estimate.rhs,
                "ratio": estimate.ratios,
            }
        ),
    }
    return checks, frames


def cmd_kernel_check(ctx: RunContext) -> Report:
    config = ctx.config
    if config.n < 3:
        raise ConfigInvalid("kernel-check needs n >= 3", module="cli")
    checks, frames = _kernel_checks(ctx)
    artifacts = [write_frame(ctx.out_dir, name, frame) for name, frame in frames.items()]
    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.warning("kernel checks failed: {}", ", ".join(failed))
    return Report(
        command=Command.KERNEL_CHECK,
        version=__version__,
        config=config,
        kernel_checks=checks,
        artifacts=artifacts,
        exit_code=EXIT_CONTRADICTION if failed else EXIT_OK,
    )


# --- sweep ------------------------------------------------------------------


def with_parameter(config: RunConfig, path: str, value: float) -> RunConfig:
    """Copy of ``config`` with the dotted ``path`` set to ``value``, re-validated."""
    data: Dict[str, Any] = config.model_dump(mode="json")
    node = data
    keys = path.split(".")
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise ConfigInvalid(
                f"sweep path '{path}' does not name a nested field", module="cli"
            )
        node = node[key]
    if keys[-1] not in node:
        raise ConfigInvalid(f"sweep path '{path}' does not exist", module="cli")
    node[keys[-1]] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigInvalid(f"sweep value {value} for {path}: {exc}", module="cli") from exc


def _sweep_one(payload: Tuple[str, float]) -> SweepRow:
    config_json, value = payload
    config = RunConfig.model_validate_json(config_json)
    try:
        field, graph = build_problem(config.problem, config.n, config.thresholds.kappa)
        verdict = run_classification(field, graph, config).verdict
    except RegularityError as exc:
        return SweepRow(value=value, error=f"{exc.module}: {exc}")
    return SweepRow(
        value=value,
        stability=verdict.stability,
        asymptotic=verdict.asymptotic,
        regularity=verdict.regularity,
        k_stat=verdict.evidence.k_stat,
    )


def cmd_sweep(ctx: RunContext) -> Report:
    config = ctx.config
    sweep = config.sweep
    if sweep is None:
        raise ConfigInvalid("sweep needs a 'sweep' section", module="cli")
    payloads = [
        (with_parameter(config, sweep.parameter, v).model_dump_json(), v) for v in sweep.values
    ]
    logger.info(
        "sweeping {} over {} values with {} workers", sweep.parameter, len(payloads), sweep.workers
    )
    if sweep.workers == 1:
        rows = [_sweep_one(p) for p in payloads]
    else:
        with Pool(processes=sweep.workers) as pool:
            rows = pool.map(_sweep_one, payloads)
    frame = pd.DataFrame([row.model_dump(mode="json") for row in rows])
    frame.insert(0, "parameter", sweep.parameter)
    artifacts = [write_frame(ctx.out_dir, "sweep.csv", frame)]
    errors = [row for row in rows if row.error]
    if errors:
        logger.warning("{} of {} sweep points failed", len(errors), len(rows))
    return Report(
        command=Command.SWEEP,
        version=__version__,
        config=config,
        sweep=rows,
        artifacts=artifacts,
        exit_code=EXIT_ERROR if len(errors) == len(rows) else EXIT_OK,
    )

