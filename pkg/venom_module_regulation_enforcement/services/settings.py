from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

MODULE_ID = "regulation_enforcement"

_OFF_VALUES = frozenset({"0", "false", "off", "no"})


def _env_enabled(name: str) -> bool:
    # Only an explicit off value disables; unset or unrecognised values keep it on.
    return (os.getenv(name) or "").strip().lower() not in _OFF_VALUES


def _env_int(name: str, default: int) -> int:
    raw = (os.getenv(name) or "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        return default


def _env_path(name: str) -> Path | None:
    raw = (os.getenv(name) or "").strip()
    return Path(raw).expanduser() if raw else None


@dataclass(frozen=True)
class RegulationEnforcementSettings:
    # None lets the host pick the module data root.
    data_root: Path | None
    parallel_workers: int
    feature_enabled: bool
    api_max_training_episodes: int

    @classmethod
    def from_env(cls) -> RegulationEnforcementSettings:
        return cls(
            data_root=_env_path("REGULATION_ENFORCEMENT_DATA_ROOT"),
            parallel_workers=min(
                16, max(1, _env_int("REGULATION_ENFORCEMENT_PARALLEL_WORKERS", default=4))
            ),
            feature_enabled=_env_enabled("FEATURE_REGULATION_ENFORCEMENT"),
            api_max_training_episodes=max(
                1,
                _env_int("REGULATION_ENFORCEMENT_API_MAX_TRAINING_EPISODES", default=200),
            ),
        )
