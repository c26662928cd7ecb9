from __future__ import annotations

from datetime import datetime
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from venom_module_regulation_enforcement.engine.gametheory import (
    EquilibriumReport,
    PayoffMatrix2x2,
)
from venom_module_regulation_enforcement.engine.training import TrainedModels

Scenario = Literal["exp1", "exp2", "egta", "detector"]
Scale = Literal["desk", "full", "paper"]
RoleName = Literal["compliant", "defective"]
CapabilityName = Literal["standard", "weak", "strong"]
DetectorSource = Literal["warmup", "synthetic"]
DiminishName = Literal["constant", "inverse", "exponential", "step"]
RunVariant = Literal["enforced", "counterfactual"]
RunStatus = Literal["completed", "failed"]


class LearnerSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(default=0.95, ge=0.0, le=1.0)
    alpha: float = Field(default=0.1, ge=0.0)
    batch_size: int = Field(default=32, ge=1)
    buffer_capacity: int = Field(default=5000, ge=1)
    epsilon_start: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_end: float = Field(default=0.05, ge=0.0, le=1.0)
    epsilon_decay_fraction: float = Field(default=0.6, gt=0.0, le=1.0)
    train_every: int = Field(default=4, ge=1)
    zone_size: int = Field(default=4, ge=1)


class DetectorSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lengths: list[int] = Field(default_factory=lambda: [5, 10, 20, 40], min_length=1)
    classifier_length: int = Field(default=20, ge=1)
    epochs: int = Field(default=100, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    batch_size: int = Field(default=64, ge=1)
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    hidden_widths: list[int] = Field(default_factory=lambda: [64, 32, 16], min_length=1)
    source: DetectorSource = "warmup"
    synthetic_traces_per_class: int = Field(default=5000, ge=1)
    synthetic_trace_length: int = Field(default=200, ge=1)
    synthetic_harvest_probability: float = Field(default=0.6, gt=0.0, le=1.0)


class DiminishSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: DiminishName = "step"
    window: int = Field(default=3, ge=1)
    params: dict[str, float] = Field(default_factory=dict)


class ExperimentConfig(BaseModel):
    """Declarative experiment description; schema defaults follow the full-scale setup."""

    model_config = ConfigDict(extra="forbid")

    scenario: Scenario
    seed: int
    scale: Scale | None = None
    width: int = Field(default=20, ge=1)
    height: int = Field(default=20, ge=1)
    agents: int | None = Field(default=None, ge=1)
    capabilities: list[CapabilityName] | None = None
    compliance: float = Field(default=0.8, ge=0.0, le=1.0)
    boycott_ratios: list[float] = Field(default_factory=lambda: [0.0, 1.0, 2.0], min_length=1)
    boycott_ratio: float = Field(default=2.0, ge=0.0)
    quota: int = Field(default=3, ge=0)
    defective_cap: int = Field(default=5, ge=1)
    tau: float = Field(default=2.0, ge=0.0)
    regulation_window: int = Field(default=3, ge=1)
    defective_shaped: bool = False
    training_episodes: int = Field(default=30000, ge=0)
    evaluation_episodes: int = Field(default=100, ge=1)
    episode_length: int = Field(default=1000, ge=1)
    tree_count: int = Field(default=10, ge=0)
    walls: list[tuple[int, int]] = Field(default_factory=list)
    repeats: int = Field(default=1, ge=1)
    learner: LearnerSettings = Field(default_factory=LearnerSettings)
    detector: DetectorSettings = Field(default_factory=DetectorSettings)
    diminish: DiminishSettings | None = None
    fixture_path: str | None = None
    output_dir: str | None = None
    defaults_applied: list[str] = Field(default_factory=list)


class ReturnRow(BaseModel):
    boycott_ratio: float
    repeat: int
    seed: int
    variant: RunVariant
    episode: int
    agent_id: int
    role: RoleName
    capability: CapabilityName
    focal: bool = False
    episode_return: float


class BoycottPoint(BaseModel):
    boycott_ratio: float
    avg_c: float | None = None
    se_c: float | None = None
    avg_d: float | None = None
    se_d: float | None = None
    counterfactual_avg_c: float | None = None
    counterfactual_se_c: float | None = None
    counterfactual_focal_avg: float | None = None
    counterfactual_focal_se: float | None = None
    capability_averages: dict[str, float] = Field(default_factory=dict)
    counterfactual_capability_averages: dict[str, float] = Field(default_factory=dict)
    flag_rate_defective: float | None = None
    flag_rate_compliant: float | None = None
    enforcement_succeeded: bool | None = None


class DetectorMetric(BaseModel):
    length: int
    train_accuracy: float
    test_accuracy: float
    majority_baseline: float
    train_windows: int
    test_windows: int


class PayoffAnalysis(BaseModel):
    matrix: PayoffMatrix2x2
    analysis: EquilibriumReport


class RunReport(BaseModel):
    scenario: Scenario
    config: ExperimentConfig
    config_hash: str
    seeds: list[int]
    defaults_applied: list[str] = Field(default_factory=list)
    returns: list[ReturnRow] = Field(default_factory=list)
    points: list[BoycottPoint] = Field(default_factory=list)
    detector_metrics: list[DetectorMetric] = Field(default_factory=list)
    payoff_before: PayoffAnalysis | None = None
    payoff_after: PayoffAnalysis | None = None
    generated_at: datetime
    timing: dict[str, float] = Field(default_factory=dict)
    # Trained artifacts for optional persistence; never serialized.
    _models: TrainedModels | None = PrivateAttr(default=None)

    @property
    def models(self) -> TrainedModels | None:
        return self._models

    def attach_models(self, models: TrainedModels) -> RunReport:
        self._models = models
        return self


class RunIndexEntry(BaseModel):
    run_id: str
    scenario: Scenario
    config_hash: str
    seed: int
    status: RunStatus
    created_at: datetime
    output_dir: str | None = None
    error: str | None = None


class RunsResponse(BaseModel):
    status: Literal["ok"] = "ok"
    count: int
    items: list[RunIndexEntry]


class RunCreateRequest(BaseModel):
    config: dict[str, Any]
    scale: Scale = "desk"
    emit: bool = False


class RunCreateResponse(BaseModel):
    status: Literal["ok"] = "ok"
    entry: RunIndexEntry
    report: RunReport


class NashAnalysisRequest(BaseModel):
    matrix: PayoffMatrix2x2


class NashAnalysisResponse(BaseModel):
    status: Literal["ok"] = "ok"
    analysis: EquilibriumReport
