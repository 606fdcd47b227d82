import json

import pandas as pd
import pytest

from regularity.artifacts import REPORT_NAME, load_report
from regularity.cli import main
from regularity.commands import (
    EXIT_ERROR,
    EXIT_INCONCLUSIVE,
    EXIT_OK,
    with_parameter,
)
from shared.errors import ConfigInvalid
from shared.types import Agreement, Command, Regularity, RunConfig

# --- Fixtures ---


@pytest.fixture
def write_config(tmp_path):
    def write(data, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return write


def short_grid(**extra):
    return {"t_max": 12.0, "t_step": 0.1, **extra}


LOGPOW = {"field": "gs", "g": {"family": "logpow", "alpha": 0.75, "sign": 1}}

# --- Tests ---


def test_classify_writes_report_and_tables(write_config, out_dir, capsys):
    config = write_config({"problem": {"field": "identity"}, "n": 2, "grid": short_grid()})
    code = main(["classify", "--config", config, "--out", str(out_dir)])
    assert code == EXIT_OK

    report = load_report(out_dir / REPORT_NAME)
    assert report.command == Command.CLASSIFY
    assert report.verdict.regularity == Regularity.DIFFERENTIABLE
    assert report.artifacts == [REPORT_NAME, "trajectory.csv", "reduction.csv"]
    trajectory = pd.read_csv(out_dir / "trajectory.csv")
    assert list(trajectory.columns) == ["t", "phi_norm", "K_stat", "mu"]

    printed = json.loads(capsys.readouterr().out)
    assert printed["exit_code"] == EXIT_OK


def test_classify_fills_the_splitting_columns(write_config, out_dir):
    config = write_config({"problem": LOGPOW, "n": 2, "grid": short_grid()})
    assert main(["classify", "--config", config, "--out", str(out_dir)]) == EXIT_OK
    frame = pd.read_csv(out_dir / "reduction.csv")
    assert list(frame.columns) == ["t", "r", "mu", "R_norm", "S1_norm", "S2_over_eps2"]
    certified = frame["r"] <= 0.5
    assert certified.sum() == 114
    assert frame.loc[certified, ["S1_norm", "S2_over_eps2"]].notna().all().all()
    assert (frame.loc[certified, "S1_norm"] > 0.0).all()
    assert frame.loc[~certified, ["S1_norm", "S2_over_eps2"]].isna().all().all()


def test_flags_override_the_config(write_config, out_dir):
    config = write_config({"problem": {"field": "identity"}, "n": 2})
    code = main(["classify", "--config", config, "--out", str(out_dir), "--t-max", "12"])
    assert code == EXIT_OK
    report = load_report(out_dir / REPORT_NAME)
    assert report.config.grid.t_max == 12.0
    assert report.verdict.evidence.t_max == 12.0


def test_decisive_flag_on_inconclusive_verdict(write_config, out_dir):
    problem = {"field": "gs", "g": {"family": "logpow", "alpha": 0.5}}
    config = write_config({"problem": problem, "n": 2, "grid": short_grid()})
    code = main(["classify", "--config", config, "--out", str(out_dir), "--decisive"])
    assert code == EXIT_INCONCLUSIVE


def test_unknown_config_key_is_an_error(write_config, out_dir):
    config = write_config({"problem": {"field": "identity"}, "horizon": 40})
    assert main(["classify", "--config", config, "--out", str(out_dir)]) == EXIT_ERROR


def test_missing_config_is_an_error(tmp_path, out_dir):
    missing = str(tmp_path / "absent.json")
    assert main(["classify", "--config", missing, "--out", str(out_dir)]) == EXIT_ERROR


def test_override_is_validated(write_config, out_dir):
    config = write_config({"problem": {"field": "identity"}})
    code = main(["classify", "--config", config, "--out", str(out_dir), "--order", "2"])
    assert code == EXIT_ERROR


def test_kernel_check_needs_three_dimensions(write_config, out_dir):
    config = write_config({"n": 2})
    assert main(["kernel-check", "--config", config, "--out", str(out_dir)]) == EXIT_ERROR


def test_kernel_check_with_short_truncation_fails(write_config, out_dir):
    config = write_config({"n": 3, "kernel": {"truncation": 2, "ratio": 0.9}})
    assert main(["kernel-check", "--config", config, "--out", str(out_dir)]) == EXIT_ERROR


def test_verify_needs_a_planar_problem(write_config, out_dir):
    config = write_config({"problem": {"field": "identity"}, "n": 3})
    assert main(["verify", "--config", config, "--out", str(out_dir)]) == EXIT_ERROR


def test_with_parameter_sets_a_nested_field():
    config = RunConfig.model_validate({"problem": LOGPOW})
    updated = with_parameter(config, "problem.g.alpha", 1.5)
    assert updated.problem.g.alpha == 1.5
    assert config.problem.g.alpha == 0.75


def test_with_parameter_rejects_bad_paths_and_values():
    config = RunConfig.model_validate({"problem": LOGPOW})
    with pytest.raises(ConfigInvalid):
        with_parameter(config, "problem.g.beta", 1.0)
    with pytest.raises(ConfigInvalid):
        with_parameter(config, "problem.field.alpha", 1.0)
    with pytest.raises(ConfigInvalid):
        with_parameter(config, "problem.g.alpha", -1.0)


@pytest.mark.slow
def test_verify_agrees_on_the_counterexample(write_config, out_dir):
    config = write_config({"problem": LOGPOW, "n": 2})
    code = main(["verify", "--config", config, "--out", str(out_dir)])
    assert code == EXIT_OK
    report = load_report(out_dir / REPORT_NAME)
    assert report.verdict.regularity == Regularity.NO_GUARANTEE
    assert report.adjudication.agreement == Agreement.CONSISTENT
    oracle = pd.read_csv(out_dir / "oracle.csv")
    assert oracle["rho"].iloc[-1] > oracle["rho"].iloc[0]


@pytest.mark.slow
def test_kernel_check_passes_on_defaults(write_config, out_dir):
    config = write_config({"n": 3})
    code = main(["kernel-check", "--config", config, "--out", str(out_dir)])
    report = load_report(out_dir / REPORT_NAME)
    failed = [c.name for c in report.kernel_checks if not c.passed]
    assert failed == []
    assert code == EXIT_OK
    table = pd.read_csv(out_dir / "coefficients.csv")
    assert (table["a_km"] - table["closed_form"]).abs().max() < 1e-8
    estimate = pd.read_csv(out_dir / "kernel_estimate.csv")
    assert list(estimate.columns) == ["r", "lhs", "near", "far", "rhs", "ratio"]
    assert (estimate["r"] > 2.0).sum() == 3


@pytest.mark.slow
def test_sweep_over_log_exponent(write_config, out_dir):
    sweep = {"parameter": "problem.g.alpha", "values": [0.75, 1.5], "workers": 1}
    config = write_config({"problem": LOGPOW, "n": 2, "grid": short_grid(), "sweep": sweep})
    code = main(["sweep", "--config", config, "--out", str(out_dir)])
    assert code == EXIT_OK
    table = pd.read_csv(out_dir / "sweep.csv")
    assert list(table["value"]) == [0.75, 1.5]
    assert set(table["parameter"]) == {"problem.g.alpha"}
