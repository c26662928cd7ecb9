from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
import pytest

from venom_module_regulation_enforcement.api.schemas import RunReport
from venom_module_regulation_enforcement.services.experiments import (
    build_config,
    parse_config,
    run_detector_sweep,
    run_egta,
    run_experiment1,
)
from venom_module_regulation_enforcement.services.outputs import (
    CURVE_COLUMNS,
    DETECTOR_COLUMNS,
    RETURNS_COLUMNS,
    OutputWriteError,
    emit_outputs,
)

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="module")
def exp1_report() -> RunReport:
    raw = json.loads((FIXTURES / "exp1_tiny.json").read_text(encoding="utf-8"))
    return run_experiment1(build_config(raw))


def _stable_summary(path: Path) -> dict:
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert "timing" not in payload
    payload.pop("generated_at")
    return payload


def test_exp1_artifacts(exp1_report: RunReport, tmp_path: Path) -> None:
    written = emit_outputs(exp1_report, tmp_path / "exp1")

    assert set(written) == {"summary", "returns", "boycott_curve", "boycott_curve_plot"}
    returns = pd.read_csv(written["returns"])
    assert list(returns.columns) == RETURNS_COLUMNS
    assert len(returns) == len(exp1_report.returns)
    curve = pd.read_csv(written["boycott_curve"])
    assert list(curve.columns) == CURVE_COLUMNS
    assert curve["boycott_ratio"].tolist() == [0.0, 1.0]
    assert set(curve["seeds"].astype(str)) == {" ".join(map(str, exp1_report.seeds))}
    assert written["boycott_curve_plot"].read_text(encoding="utf-8").lstrip().startswith("<?xml")


def test_summary_matches_returns_csv(exp1_report: RunReport, tmp_path: Path) -> None:
    written = emit_outputs(exp1_report, tmp_path)
    summary = json.loads(written["summary"].read_text(encoding="utf-8"))
    returns = pd.read_csv(written["returns"])

    assert "returns" not in summary
    assert summary["config_hash"] == exp1_report.config_hash
    assert summary["seeds"] == exp1_report.seeds
    enforced = returns[returns["variant"] == "enforced"]
    for point in summary["points"]:
        rows = enforced[enforced["boycott_ratio"] == point["boycott_ratio"]]
        assert point["avg_c"] == pytest.approx(
            rows.loc[rows["role"] == "compliant", "return"].mean(), abs=1e-9
        )
        assert point["avg_d"] == pytest.approx(
            rows.loc[rows["role"] == "defective", "return"].mean(), abs=1e-9
        )


def test_identical_runs_write_identical_summaries(tmp_path: Path) -> None:
    raw = json.loads((FIXTURES / "exp1_tiny.json").read_text(encoding="utf-8"))
    first = emit_outputs(run_experiment1(build_config(raw)), tmp_path / "a")
    second = emit_outputs(run_experiment1(build_config(raw)), tmp_path / "b")

    assert _stable_summary(first["summary"]) == _stable_summary(second["summary"])
    assert first["returns"].read_bytes() == second["returns"].read_bytes()
    assert first["boycott_curve"].read_bytes() == second["boycott_curve"].read_bytes()


def test_egta_artifacts_carry_hash_and_seeds(tmp_path: Path) -> None:
    report = run_egta(parse_config(FIXTURES / "egta_fixture.json"))

    written = emit_outputs(report, tmp_path)

    assert set(written) == {"summary", "payoff_before", "payoff_after"}
    before = json.loads(written["payoff_before"].read_text(encoding="utf-8"))
    assert before["config_hash"] == report.config_hash
    assert before["seeds"] == report.seeds
    assert before["analysis"]["enforcement_holds"] is False
    assert [cell["profile"] for cell in before["matrix"]["cells"]][0] == ["C", "C"]


def test_detector_artifacts(tmp_path: Path) -> None:
    config = build_config(
        {
            "scenario": "detector",
            "seed": 0,
            "detector": {
                "source": "synthetic",
                "synthetic_traces_per_class": 10,
                "synthetic_trace_length": 20,
                "lengths": [5],
                "epochs": 1,
            },
        }
    )

    written = emit_outputs(run_detector_sweep(config), tmp_path)

    metrics = pd.read_csv(written["detector_metrics"])
    assert list(metrics.columns) == DETECTOR_COLUMNS
    assert len(metrics) == 1
    assert written["detector_accuracy_plot"].exists()


def test_write_failure_names_the_path(exp1_report: RunReport, tmp_path: Path) -> None:
    blocked = tmp_path / "blocked"
    blocked.write_text("not a directory", encoding="utf-8")

    with pytest.raises(OutputWriteError, match="output_write_failed:.*blocked"):
        emit_outputs(exp1_report, blocked)


def test_summary_leaves_out_wall_clock_timing(exp1_report: RunReport, tmp_path: Path) -> None:
    assert "total_seconds" in exp1_report.timing

    written = emit_outputs(exp1_report, tmp_path)

    summary = json.loads(written["summary"].read_text(encoding="utf-8"))
    assert "timing" not in summary
    assert "generated_at" in summary


def test_save_models_without_trained_models_writes_none(tmp_path: Path) -> None:
    report = run_egta(parse_config(FIXTURES / "egta_fixture.json"))

    written = emit_outputs(report, tmp_path, save_models=True)

    assert "models" not in written
    assert not (tmp_path / "models").exists()
