from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from datetime import datetime, timezone

UTC = timezone.utc
from pathlib import Path
from threading import RLock
from typing import Any
from uuid import uuid4

from venom_core.core.module_data_policy import resolve_module_data_root

from venom_module_regulation_enforcement.api.schemas import (
    ExperimentConfig,
    RunIndexEntry,
    RunReport,
    Scale,
)
from venom_module_regulation_enforcement.engine.gametheory import (
    EquilibriumReport,
    PayoffMatrix2x2,
    analyze_matrix,
)
from venom_module_regulation_enforcement.services.experiments import (
    ConfigParseError,
    build_config,
    config_hash,
    execute,
)
from venom_module_regulation_enforcement.services.settings import (
    MODULE_ID,
    RegulationEnforcementSettings,
)

logger = logging.getLogger(__name__)


class RunNotFoundError(KeyError):
    pass


class TrainingBudgetExceededError(ValueError):
    pass


class ExperimentService:
    def __init__(self, settings: RegulationEnforcementSettings | None = None) -> None:
        self.settings = settings or RegulationEnforcementSettings.from_env()
        self._state_file = self._module_data_root() / "runtime-state.json"
        self._lock = RLock()
        self._runs: dict[str, RunIndexEntry] = {}
        self._load_runtime_state()

    def _module_data_root(self) -> Path:
        return resolve_module_data_root(module_id=MODULE_ID, base_dir=self.settings.data_root)

    def _load_runtime_state(self) -> None:
        try:
            if not self._state_file.exists():
                return
            payload = json.loads(self._state_file.read_text(encoding="utf-8"))
            runs_raw = payload.get("runs")
            if isinstance(runs_raw, list):
                loaded: dict[str, RunIndexEntry] = {}
                for item in runs_raw:
                    if isinstance(item, dict):
                        entry = RunIndexEntry.model_validate(item)
                        loaded[entry.run_id] = entry
                self._runs = loaded
        except Exception as exc:
            logger.warning("Regulation Enforcement runtime state load failed: %s", exc)

    def _persist_runtime_state(self) -> None:
        try:
            self._state_file.parent.mkdir(parents=True, exist_ok=True)
            payload = {
                "runs": [item.model_dump(mode="json") for item in self._runs.values()],
            }
            self._state_file.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
        except Exception as exc:
            logger.warning("Regulation Enforcement runtime state persist failed: %s", exc)

    def list_runs(self) -> list[RunIndexEntry]:
        with self._lock:
            return sorted(self._runs.values(), key=lambda e: e.created_at, reverse=True)

    def get_run(self, run_id: str) -> RunIndexEntry:
        with self._lock:
            entry = self._runs.get(run_id)
        if entry is None:
            raise RunNotFoundError(run_id)
        return entry

    def _record(self, entry: RunIndexEntry) -> None:
        with self._lock:
            self._runs[entry.run_id] = entry
            self._persist_runtime_state()

    def run(
        self,
        config: ExperimentConfig,
        *,
        output_dir: Path | None = None,
        emit_to_data_root: bool = False,
        save_models: bool = False,
    ) -> tuple[RunIndexEntry, RunReport, dict[str, Path]]:
        run_id = uuid4().hex
        created_at = datetime.now(UTC)
        target = output_dir or (Path(config.output_dir) if config.output_dir else None)
        if target is None and emit_to_data_root:
            target = self._module_data_root() / "runs" / run_id
        try:
            report, written = execute(
                config,
                target,
                max_workers=self.settings.parallel_workers,
                save_models=save_models,
            )
        except Exception as exc:
            self._record(
                RunIndexEntry(
                    run_id=run_id,
                    scenario=config.scenario,
                    config_hash=config_hash(config),
                    seed=config.seed,
                    status="failed",
                    created_at=created_at,
                    output_dir=str(target) if target else None,
                    error=str(exc),
                )
            )
            raise
        entry = RunIndexEntry(
            run_id=run_id,
            scenario=config.scenario,
            config_hash=report.config_hash,
            seed=config.seed,
            status="completed",
            created_at=created_at,
            output_dir=str(target) if target else None,
        )
        self._record(entry)
        return entry, report, written

    def run_bounded(
        self,
        raw_config: Mapping[str, Any],
        *,
        scale: Scale = "desk",
        emit: bool = False,
    ) -> tuple[RunIndexEntry, RunReport]:
        config = build_config(raw_config, scale=scale)
        limit = self.settings.api_max_training_episodes
        if config.training_episodes > limit:
            raise TrainingBudgetExceededError(
                f"training_budget_exceeded:{config.training_episodes}>{limit}"
            )
        if config.fixture_path:
            raise ConfigParseError("invalid_value:fixture_path:not accepted over the API")
        entry, report, _written = self.run(
            config.model_copy(update={"output_dir": None}), emit_to_data_root=emit
        )
        return entry, report

    def analyze(self, matrix: PayoffMatrix2x2) -> EquilibriumReport:
        return analyze_matrix(matrix)


_service = ExperimentService()


def get_experiment_service() -> ExperimentService:
    return _service


def health_payload() -> dict[str, str]:
    return {"status": "ok", "module": MODULE_ID}
