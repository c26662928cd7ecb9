from __future__ import annotations

from pathlib import Path

import pytest

pytest.importorskip("venom_core")

from venom_core.core.module_data_policy import resolve_module_data_root  # noqa: E402

from venom_module_regulation_enforcement.services import service as service_module  # noqa: E402
from venom_module_regulation_enforcement.services.experiments import (  # noqa: E402
    ConfigParseError,
    build_config,
    parse_config,
)
from venom_module_regulation_enforcement.services.service import (  # noqa: E402
    ExperimentService,
    RunNotFoundError,
    TrainingBudgetExceededError,
)

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(autouse=True)
def isolated_module_state(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.setenv("REGULATION_ENFORCEMENT_DATA_ROOT", str(tmp_path / "data"))
    monkeypatch.setenv("REGULATION_ENFORCEMENT_PARALLEL_WORKERS", "1")


def _module_data_root(tmp_path: Path) -> Path:
    return resolve_module_data_root(
        module_id="regulation_enforcement",
        base_dir=tmp_path / "data",
    )


def test_service_persists_run_index(tmp_path: Path) -> None:
    service = ExperimentService()
    entry, report, written = service.run(parse_config(FIXTURES / "egta_fixture.json"))

    assert entry.status == "completed"
    assert written == {}
    assert report.config_hash == entry.config_hash

    reloaded = ExperimentService()
    assert [item.run_id for item in reloaded.list_runs()] == [entry.run_id]
    assert reloaded.get_run(entry.run_id).scenario == "egta"
    with pytest.raises(RunNotFoundError):
        reloaded.get_run("missing")
    assert (_module_data_root(tmp_path) / "runtime-state.json").exists()


def test_service_records_failed_runs(tmp_path: Path) -> None:
    config = build_config(
        {"scenario": "egta", "seed": 0, "fixture_path": str(tmp_path / "absent.json")}
    )
    service = ExperimentService()

    with pytest.raises(ConfigParseError, match="fixture_path"):
        service.run(config)

    [entry] = service.list_runs()
    assert entry.status == "failed"
    assert "fixture_path" in (entry.error or "")


def test_service_tolerates_corrupt_state_file(tmp_path: Path) -> None:
    state = _module_data_root(tmp_path) / "runtime-state.json"
    state.parent.mkdir(parents=True, exist_ok=True)
    state.write_text("{not json", encoding="utf-8")

    assert ExperimentService().list_runs() == []


def test_service_emits_to_data_root_on_request(tmp_path: Path) -> None:
    service = ExperimentService()
    config = parse_config(FIXTURES / "egta_fixture.json")

    entry, _report, written = service.run(config, emit_to_data_root=True)

    assert Path(entry.output_dir) == _module_data_root(tmp_path) / "runs" / entry.run_id
    assert written["payoff_after"].exists()


def test_run_bounded_enforces_training_budget() -> None:
    service = ExperimentService()

    with pytest.raises(TrainingBudgetExceededError, match="training_budget_exceeded:2000>200"):
        service.run_bounded({"scenario": "exp1", "seed": 1})


def test_run_bounded_rejects_fixture_path() -> None:
    service = ExperimentService()
    raw = {"scenario": "egta", "seed": 0, "training_episodes": 1, "fixture_path": "x.json"}

    with pytest.raises(ConfigParseError, match="fixture_path"):
        service.run_bounded(raw)


def test_module_singleton_and_health() -> None:
    assert service_module.get_experiment_service() is service_module._service
    assert service_module.health_payload() == {"status": "ok", "module": "regulation_enforcement"}




def test_service_run_saves_models_on_request(tmp_path: Path) -> None:
    config = build_config(
        {
            "scenario": "exp1",
            "seed": 4,
            "width": 5,
            "height": 5,
            "agents": 2,
            "compliance": 0.5,
            "tree_count": 1,
            "episode_length": 5,
            "training_episodes": 1,
            "evaluation_episodes": 1,
            "boycott_ratios": [1],
        }
    )

    _entry, _report, written = ExperimentService().run(
        config, output_dir=tmp_path / "out", save_models=True
    )

    assert (written["models"] / "enforced_b1_r0" / "agent_0.json").exists()
    assert (written["models"] / "counterfactual_r0" / "agent_1.json").exists()
