from __future__ import annotations

from pathlib import Path

import pytest

from venom_module_regulation_enforcement.services.settings import (
    RegulationEnforcementSettings,
)


@pytest.mark.parametrize(
    ("value", "enabled"),
    [(None, True), ("", True), ("1", True), ("maybe", True), ("0", False), (" Off ", False)],
)
def test_feature_flag_disabled_only_by_off_values(
    monkeypatch: pytest.MonkeyPatch, value: str | None, enabled: bool
) -> None:
    if value is None:
        monkeypatch.delenv("FEATURE_REGULATION_ENFORCEMENT", raising=False)
    else:
        monkeypatch.setenv("FEATURE_REGULATION_ENFORCEMENT", value)

    assert RegulationEnforcementSettings.from_env().feature_enabled is enabled


def test_data_root_left_to_host_when_unset(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path
) -> None:
    monkeypatch.delenv("REGULATION_ENFORCEMENT_DATA_ROOT", raising=False)
    assert RegulationEnforcementSettings.from_env().data_root is None

    monkeypatch.setenv("REGULATION_ENFORCEMENT_DATA_ROOT", str(tmp_path))
    assert RegulationEnforcementSettings.from_env().data_root == tmp_path


def test_parallel_workers_are_clamped(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("REGULATION_ENFORCEMENT_PARALLEL_WORKERS", "64")
    assert RegulationEnforcementSettings.from_env().parallel_workers == 16

    monkeypatch.setenv("REGULATION_ENFORCEMENT_PARALLEL_WORKERS", "not-a-number")
    assert RegulationEnforcementSettings.from_env().parallel_workers == 4
