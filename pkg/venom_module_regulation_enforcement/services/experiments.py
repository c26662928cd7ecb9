"""Experiment configs and the scenario runners.

Nothing here touches the host: the CLI runs these directly and
:mod:`services.service` wraps them with the run index.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Callable, Hashable, Mapping
from datetime import datetime, timezone

UTC = timezone.utc
from functools import partial
from pathlib import Path
from time import perf_counter
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from venom_module_regulation_enforcement.api.schemas import (
    BoycottPoint,
    DetectorMetric,
    ExperimentConfig,
    PayoffAnalysis,
    ReturnRow,
    RunReport,
    Scale,
    Scenario,
)
from venom_module_regulation_enforcement.engine.detector import (
    BehaviorTrace,
    ClassifierReport,
    Label,
    SequenceClassifier,
    build_dataset,
    classify_trace,
    length_sweep,
    quota_detect,
    synthetic_reward_traces,
    train_classifier,
)
from venom_module_regulation_enforcement.engine.gametheory import (
    EgtaPlan,
    PayoffMatrix2x2,
    analyze_matrix,
    fill_empirical_matrix,
)
from venom_module_regulation_enforcement.engine.gridworld import (
    Capability,
    ContractViolationError,
    Role,
)
from venom_module_regulation_enforcement.engine.learner import LearnerConfig
from venom_module_regulation_enforcement.engine.parallel import run_jobs
from venom_module_regulation_enforcement.engine.shaping import (
    BoycottStage,
    DiminishStage,
    ShapingStage,
    ThresholdStage,
    make_diminish_config,
)
from venom_module_regulation_enforcement.engine.training import (
    ScenarioOutcome,
    ScenarioSettings,
    TraceDetector,
    TrainedModels,
    assign_roles,
    derive_seed,
    run_scenario,
)
from venom_module_regulation_enforcement.services.outputs import emit_outputs

logger = logging.getLogger(__name__)

SCALE_PRESETS: dict[str, dict[str, Any]] = {
    "desk": {
        "width": 12,
        "height": 12,
        "episode_length": 200,
        "training_episodes": 2000,
        "evaluation_episodes": 50,
        "tree_count": 5,
    },
    "full": {},
}
# Older configs name the full scale "paper".
SCALE_ALIASES: dict[str, str] = {"paper": "full"}
DETECTOR_SCALE_PRESETS: dict[str, dict[str, Any]] = {
    "desk": {"source": "synthetic", "synthetic_traces_per_class": 500},
    "full": {},
}
AGENT_DEFAULTS: dict[tuple[str, str], int] = {("desk", "egta"): 6, ("full", "egta"): 10}
DEFAULT_AGENTS = 5
_NESTED_BLOCKS = ("learner", "detector", "diminish")


class ConfigParseError(ValueError):
    pass


def _missing_keys(data: Mapping[str, Any], model: type[BaseModel]) -> list[str]:
    missing = []
    for name in model.model_fields:
        if name == "defaults_applied":
            continue
        if name not in data:
            missing.append(name)
            continue
        field_type = model.model_fields[name].annotation
        if name in _NESTED_BLOCKS and isinstance(data[name], Mapping):
            nested = field_type if isinstance(field_type, type) else None
            if nested is not None and issubclass(nested, BaseModel):
                missing.extend(f"{name}.{key}" for key in _missing_keys(data[name], nested))
    return missing


def _validation_key(exc: ValidationError) -> tuple[str, str, str]:
    error = exc.errors()[0]
    key = ".".join(str(part) for part in error.get("loc", ())) or "config"
    return key, str(error.get("type", "")), str(error.get("msg", ""))


def build_config(
    raw: Any,
    *,
    scale: Scale | None = None,
    overrides: Mapping[str, Any] | None = None,
    scenario: Scenario | None = None,
    default_scale: Scale | None = None,
) -> ExperimentConfig:
    """Validate a raw config mapping.

    ``overrides`` replace file values; ``scenario`` only fills a missing key and
    must agree with the file otherwise.
    """
    if not isinstance(raw, Mapping):
        raise ConfigParseError("config_not_an_object")
    data = dict(raw)
    if scenario is not None:
        if data.setdefault("scenario", scenario) != scenario:
            raise ConfigParseError(f"invalid_value:scenario:{data['scenario']} is not {scenario}")
    if "defaults_applied" in data:
        raise ConfigParseError("unknown_key:defaults_applied")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    for required in ("scenario", "seed"):
        if required not in data:
            raise ConfigParseError(f"missing_key:{required}")

    resolved_scale = scale or data.get("scale") or default_scale
    resolved_scale = SCALE_ALIASES.get(resolved_scale, resolved_scale)
    if resolved_scale is not None and resolved_scale not in SCALE_PRESETS:
        raise ConfigParseError(f"invalid_value:scale:{resolved_scale}")
    preset_filled: list[str] = []
    if resolved_scale:
        data["scale"] = resolved_scale
        for key, value in SCALE_PRESETS[resolved_scale].items():
            if key not in data:
                data[key] = value
                preset_filled.append(key)
        detector_preset = DETECTOR_SCALE_PRESETS[resolved_scale]
        if detector_preset:
            block = data.get("detector")
            if block is None:
                block = {}
            if isinstance(block, Mapping):
                block = dict(block)
                for key, value in detector_preset.items():
                    if key not in block:
                        block[key] = value
                        preset_filled.append(f"detector.{key}")
                data["detector"] = block

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        key, kind, message = _validation_key(exc)
        if kind == "extra_forbidden":
            raise ConfigParseError(f"unknown_key:{key}") from exc
        raise ConfigParseError(f"invalid_value:{key}:{message}") from exc

    defaults = [f"{key}=scale:{resolved_scale}" for key in sorted(preset_filled)]
    defaults.extend(key for key in _missing_keys(data, ExperimentConfig) if key != "agents")
    agents = config.agents
    if agents is None:
        agents = AGENT_DEFAULTS.get((resolved_scale or "full", config.scenario), DEFAULT_AGENTS)
        defaults.append("agents")

    if config.capabilities is not None and len(config.capabilities) != agents:
        raise ConfigParseError(
            f"invalid_value:capabilities:length {len(config.capabilities)} != agents {agents}"
        )
    if config.scenario == "egta" and agents < 2:
        raise ConfigParseError("invalid_value:agents:egta needs at least two focal agents")
    if any(ratio < 0 for ratio in config.boycott_ratios):
        raise ConfigParseError("invalid_value:boycott_ratios:must be non-negative")
    if len(set(config.boycott_ratios)) != len(config.boycott_ratios):
        raise ConfigParseError("invalid_value:boycott_ratios:duplicate ratio")
    if config.scenario == "detector" and config.repeats != 1:
        raise ConfigParseError("invalid_value:repeats:the detector sweep runs a single repeat")
    if config.diminish is not None:
        try:
            make_diminish_config(
                config.diminish.name,
                window=config.diminish.window,
                params=config.diminish.params,
            )
        except ContractViolationError as exc:
            raise ConfigParseError(f"invalid_value:diminish:{exc}") from exc
    lengths = config.detector.lengths
    if any(length <= 0 for length in lengths) or lengths != sorted(set(lengths)):
        raise ConfigParseError("invalid_value:detector.lengths:must be positive and ascending")
    if any(not (0 <= x < config.width and 0 <= y < config.height) for x, y in config.walls):
        raise ConfigParseError("invalid_value:walls:cell outside the grid")
    return config.model_copy(update={"agents": agents, "defaults_applied": defaults})


def parse_config(
    path: Path,
    *,
    scale: Scale | None = None,
    overrides: Mapping[str, Any] | None = None,
    scenario: Scenario | None = None,
    default_scale: Scale | None = None,
) -> ExperimentConfig:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigParseError(f"config_unreadable:{path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"config_malformed:line={exc.lineno}") from exc
    config = build_config(
        raw,
        scale=scale,
        overrides=overrides,
        scenario=scenario,
        default_scale=default_scale,
    )
    if config.fixture_path and not Path(config.fixture_path).is_absolute():
        resolved = (path.parent / config.fixture_path).resolve()
        config = config.model_copy(update={"fixture_path": str(resolved)})
    return config


def config_hash(config: ExperimentConfig) -> str:
    payload = config.model_dump(mode="json", exclude={"output_dir", "defaults_applied"})
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8"))
    return digest.hexdigest()[:16]


def repeat_seeds(config: ExperimentConfig) -> list[int]:
    return [derive_seed(config.seed, "repeat", index) for index in range(config.repeats)]


def scenario_settings(config: ExperimentConfig) -> ScenarioSettings:
    learner = config.learner
    return ScenarioSettings(
        width=config.width,
        height=config.height,
        tree_count=config.tree_count,
        episode_length=config.episode_length,
        walls=frozenset((int(x), int(y)) for x, y in config.walls),
        zone_size=learner.zone_size,
        training_episodes=config.training_episodes,
        evaluation_episodes=config.evaluation_episodes,
        learner=LearnerConfig(
            gamma=learner.gamma,
            alpha=learner.alpha,
            batch_size=learner.batch_size,
            buffer_capacity=learner.buffer_capacity,
            train_every=learner.train_every,
        ),
        epsilon_start=learner.epsilon_start,
        epsilon_end=learner.epsilon_end,
        epsilon_decay_fraction=learner.epsilon_decay_fraction,
        quota=config.quota,
        defective_cap=config.defective_cap,
    )


def _require_scenario(config: ExperimentConfig, scenario: str) -> None:
    if config.scenario != scenario:
        raise ConfigParseError(f"invalid_value:scenario:{config.scenario} is not {scenario}")


def _agent_count(config: ExperimentConfig) -> int:
    return config.agents if config.agents is not None else DEFAULT_AGENTS


def _rows(
    outcome: ScenarioOutcome,
    *,
    boycott_ratio: float,
    repeat: int,
    seed: int,
    variant: str,
    focal: set[int],
) -> list[ReturnRow]:
    rows = []
    for episode, returns in enumerate(outcome.evaluation.returns):
        for profile, value in zip(outcome.profiles, returns):
            rows.append(
                ReturnRow(
                    boycott_ratio=boycott_ratio,
                    repeat=repeat,
                    seed=seed,
                    variant=variant,
                    episode=episode,
                    agent_id=profile.agent_id,
                    role=profile.role,
                    capability=profile.capability,
                    focal=profile.agent_id in focal,
                    episode_return=float(value),
                )
            )
    return rows


def _mean_se(values: pd.Series) -> tuple[float | None, float | None]:
    if values.empty:
        return None, None
    mean = float(values.mean())
    if len(values) < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / np.sqrt(len(values)))


def _flag_rate(outcomes: list[ScenarioOutcome], role: Role) -> float | None:
    flagged = 0
    total = 0
    for outcome in outcomes:
        episodes = outcome.evaluation.episodes
        for profile, count in zip(outcome.profiles, outcome.evaluation.flag_counts):
            if profile.role == role:
                flagged += int(count)
                total += episodes
    return flagged / total if total else None


def summarize_points(
    rows: list[ReturnRow],
    ratios: list[float],
    enforced: Mapping[float, list[ScenarioOutcome]] | None = None,
) -> list[BoycottPoint]:
    """Aggregate the per-episode table into one point per boycott ratio."""
    frame = pd.DataFrame([row.model_dump() for row in rows])
    points = []
    for ratio in ratios:
        at_ratio = frame[frame["boycott_ratio"] == ratio]
        run = at_ratio[at_ratio["variant"] == "enforced"]
        baseline = at_ratio[at_ratio["variant"] == "counterfactual"]
        avg_c, se_c = _mean_se(run.loc[run["role"] == "compliant", "episode_return"])
        avg_d, se_d = _mean_se(run.loc[run["role"] == "defective", "episode_return"])
        cf_c, cf_se = _mean_se(baseline["episode_return"])
        cf_focal, cf_focal_se = _mean_se(baseline.loc[baseline["focal"], "episode_return"])
        point = BoycottPoint(
            boycott_ratio=ratio,
            avg_c=avg_c,
            se_c=se_c,
            avg_d=avg_d,
            se_d=se_d,
            counterfactual_avg_c=cf_c,
            counterfactual_se_c=cf_se,
            counterfactual_focal_avg=cf_focal,
            counterfactual_focal_se=cf_focal_se,
            capability_averages={
                str(k): float(v)
                for k, v in run.groupby("capability")["episode_return"].mean().items()
            },
            counterfactual_capability_averages={
                str(k): float(v)
                for k, v in baseline.groupby("capability")["episode_return"].mean().items()
            },
        )
        if enforced is not None:
            point.flag_rate_defective = _flag_rate(enforced[ratio], "defective")
            point.flag_rate_compliant = _flag_rate(enforced[ratio], "compliant")
        if avg_d is not None and cf_focal is not None:
            point.enforcement_succeeded = avg_d < cf_focal
        points.append(point)
    return points


def _collect(
    results: Mapping[Any, ScenarioOutcome],
    ratios: list[float],
    seeds: list[int],
    rosters: list[list[Role]],
    baseline_key: Callable[[float, int], Hashable],
) -> tuple[list[ReturnRow], dict[float, list[ScenarioOutcome]]]:
    rows: list[ReturnRow] = []
    enforced: dict[float, list[ScenarioOutcome]] = {}
    for ratio in ratios:
        for repeat, seed in enumerate(seeds):
            focal = {i for i, role in enumerate(rosters[repeat]) if role == "defective"}
            outcome = results[("enforced", ratio, repeat)]
            enforced.setdefault(ratio, []).append(outcome)
            for variant, result in (
                ("enforced", outcome),
                ("counterfactual", results[baseline_key(ratio, repeat)]),
            ):
                rows.extend(
                    _rows(
                        result,
                        boycott_ratio=ratio,
                        repeat=repeat,
                        seed=seed,
                        variant=variant,
                        focal=focal,
                    )
                )
    return rows, enforced


def _report(
    config: ExperimentConfig,
    seeds: list[int],
    started: float,
    **fields: Any,
) -> RunReport:
    return RunReport(
        scenario=config.scenario,
        config=config,
        config_hash=config_hash(config),
        seeds=seeds,
        defaults_applied=list(config.defaults_applied),
        generated_at=datetime.now(UTC),
        timing={"total_seconds": round(perf_counter() - started, 3)},
        **fields,
    )


def _run_label(key: tuple[Any, ...]) -> str:
    variant, *ratios, repeat = key
    return "_".join([variant, *(f"b{ratio:g}" for ratio in ratios), f"r{repeat}"])


def _trained_models(
    results: Mapping[tuple[Any, ...], ScenarioOutcome],
    classifiers: Mapping[int, tuple[SequenceClassifier, ClassifierReport]] | None = None,
) -> TrainedModels:
    return TrainedModels(
        policies={_run_label(key): outcome.training.policies for key, outcome in results.items()},
        classifiers={
            f"detector_r{repeat}": classifier
            for repeat, (classifier, _report) in (classifiers or {}).items()
        },
    )


def _quota_detector(config: ExperimentConfig) -> TraceDetector:
    return partial(quota_detect, quota=config.quota)


def _roster_capabilities(
    config: ExperimentConfig, roles: list[Role], *, graded: bool
) -> list[Capability]:
    """Capability per agent id; graded rosters mix weak and strong compliant agents."""
    if config.capabilities is not None:
        return list(config.capabilities)
    if not graded:
        return ["standard"] * len(roles)
    compliant = [agent_id for agent_id, role in enumerate(roles) if role == "compliant"]
    strong_count = max(1, round(len(compliant) / 4)) if compliant else 0
    strong = set(compliant[len(compliant) - strong_count :])
    return [
        "strong" if role == "defective" or agent_id in strong else "weak"
        for agent_id, role in enumerate(roles)
    ]


def run_experiment1(config: ExperimentConfig, *, max_workers: int = 1) -> RunReport:
    """Quota regulation enforced by boycotting, swept over the boycotting ratio."""
    _require_scenario(config, "exp1")
    started = perf_counter()
    settings = scenario_settings(config)
    seeds = repeat_seeds(config)
    count = _agent_count(config)
    detector = _quota_detector(config)
    rosters = [assign_roles(count, config.compliance, seed) for seed in seeds]
    capabilities = [_roster_capabilities(config, roles, graded=False) for roles in rosters]

    def _profiles(roles: list[Role], caps: list[Capability], ratio: float):
        return [
            settings.profile(
                agent_id,
                role,
                caps[agent_id],
                (BoycottStage(ratio),) if role == "compliant" else (),
            )
            for agent_id, role in enumerate(roles)
        ]

    jobs: dict[Hashable, Callable[[], ScenarioOutcome]] = {}
    for repeat, seed in enumerate(seeds):
        roles, caps = rosters[repeat], capabilities[repeat]
        for ratio in config.boycott_ratios:
            jobs[("enforced", ratio, repeat)] = partial(
                run_scenario, settings, _profiles(roles, caps, ratio), seed, detector=detector
            )
        # Agents capped at the quota are never flagged, so one all-compliant run serves every B.
        jobs[("counterfactual", repeat)] = partial(
            run_scenario,
            settings,
            _profiles(["compliant"] * count, caps, 0.0),
            seed,
            detector=detector,
        )
    logger.info("Experiment 1 started: %d runs (seed=%s)", len(jobs), config.seed)
    results = run_jobs(jobs, max_workers)

    rows, enforced = _collect(
        results,
        config.boycott_ratios,
        seeds,
        rosters,
        lambda ratio, repeat: ("counterfactual", repeat),
    )
    report = _report(
        config,
        seeds,
        started,
        returns=rows,
        points=summarize_points(rows, config.boycott_ratios, enforced),
    )
    logger.info("Experiment 1 finished in %.1fs", report.timing["total_seconds"])
    return report.attach_models(_trained_models(results))


def _regulation_stage(config: ExperimentConfig) -> ShapingStage:
    if config.diminish is not None:
        return DiminishStage(
            make_diminish_config(
                config.diminish.name,
                window=config.diminish.window,
                params=config.diminish.params,
            )
        )
    return ThresholdStage(tau=config.tau, window=config.regulation_window)


def _balanced(
    corpus: list[tuple[BehaviorTrace, Label]], seed: int
) -> list[tuple[BehaviorTrace, Label]]:
    by_label: dict[str, list[int]] = {"compliant": [], "defective": []}
    for index, (_trace, label) in enumerate(corpus):
        by_label[label].append(index)
    size = min(len(members) for members in by_label.values())
    if size == 0:
        return corpus
    rng = np.random.default_rng(derive_seed(seed, "balance"))
    keep = sorted(
        int(index)
        for members in by_label.values()
        for index in rng.choice(members, size=size, replace=False)
    )
    return [corpus[index] for index in keep]


def _graded_profiles(
    config: ExperimentConfig,
    settings: ScenarioSettings,
    roles: list[Role],
    caps: list[Capability],
    ratio: float,
):
    regulation = _regulation_stage(config)
    profiles = []
    for agent_id, role in enumerate(roles):
        if role == "compliant":
            stages: tuple[ShapingStage, ...] = (regulation, BoycottStage(ratio))
        elif config.defective_shaped:
            stages = (regulation,)
        else:
            stages = ()
        profiles.append(settings.profile(agent_id, role, caps[agent_id], stages))
    return profiles


def trace_corpus(config: ExperimentConfig, seed: int) -> list[tuple[BehaviorTrace, Label]]:
    """Labeled reward traces for detector training, simulated or synthetic."""
    detector = config.detector
    if detector.source == "synthetic":
        return synthetic_reward_traces(
            traces_per_class=detector.synthetic_traces_per_class,
            trace_length=detector.synthetic_trace_length,
            seed=derive_seed(seed, "synthetic"),
            harvest_probability=detector.synthetic_harvest_probability,
            tau=config.tau,
            window=config.regulation_window,
        )
    settings = scenario_settings(config)
    roles = assign_roles(_agent_count(config), config.compliance, seed)
    caps = _roster_capabilities(config, roles, graded=True)
    warmup = run_scenario(
        settings,
        _graded_profiles(config, settings, roles, caps, 0.0),
        derive_seed(seed, "warmup"),
        keep_traces=True,
    )
    corpus = [
        (trace, roles[trace.agent_id])
        for episode in warmup.evaluation.traces
        for trace in episode
    ]
    return _balanced(corpus, seed)


def train_detector(
    config: ExperimentConfig, seed: int
) -> tuple[SequenceClassifier, ClassifierReport]:
    detector = config.detector
    dataset = build_dataset(
        trace_corpus(config, seed),
        detector.classifier_length,
        test_fraction=detector.test_fraction,
        seed=derive_seed(seed, "split"),
    )
    return train_classifier(
        dataset,
        detector.epochs,
        derive_seed(seed, "classifier"),
        learning_rate=detector.learning_rate,
        batch_size=detector.batch_size,
        hidden_widths=detector.hidden_widths,
    )


def _metric(report: ClassifierReport) -> DetectorMetric:
    return DetectorMetric(
        length=report.length,
        train_accuracy=report.train_accuracy,
        test_accuracy=report.test_accuracy,
        majority_baseline=report.majority_baseline,
        train_windows=report.train_windows,
        test_windows=report.test_windows,
    )


def run_experiment2(config: ExperimentConfig, *, max_workers: int = 1) -> RunReport:
    """Threshold regulation for mixed-capability agents with a learned detector."""
    _require_scenario(config, "exp2")
    started = perf_counter()
    settings = scenario_settings(config)
    seeds = repeat_seeds(config)
    count = _agent_count(config)
    rosters = [assign_roles(count, config.compliance, seed) for seed in seeds]
    capabilities = [_roster_capabilities(config, roles, graded=True) for roles in rosters]

    classifiers = run_jobs(
        {repeat: partial(train_detector, config, seed) for repeat, seed in enumerate(seeds)},
        max_workers,
    )
    detectors = {
        repeat: partial(classify_trace, classifier)
        for repeat, (classifier, _report) in classifiers.items()
    }

    jobs: dict[Hashable, Callable[[], ScenarioOutcome]] = {}
    for repeat, seed in enumerate(seeds):
        roles, caps = rosters[repeat], capabilities[repeat]
        for ratio in config.boycott_ratios:
            jobs[("enforced", ratio, repeat)] = partial(
                run_scenario,
                settings,
                _graded_profiles(config, settings, roles, caps, ratio),
                seed,
                detector=detectors[repeat],
            )
            # A learned detector may flag compliant agents, so the baseline depends on B.
            jobs[("counterfactual", ratio, repeat)] = partial(
                run_scenario,
                settings,
                _graded_profiles(config, settings, ["compliant"] * count, caps, ratio),
                seed,
                detector=detectors[repeat],
            )
    logger.info("Experiment 2 started: %d runs (seed=%s)", len(jobs), config.seed)
    results = run_jobs(jobs, max_workers)

    rows, enforced = _collect(
        results,
        config.boycott_ratios,
        seeds,
        rosters,
        lambda ratio, repeat: ("counterfactual", ratio, repeat),
    )
    report = _report(
        config,
        seeds,
        started,
        returns=rows,
        points=summarize_points(rows, config.boycott_ratios, enforced),
        detector_metrics=[_metric(classifiers[repeat][1]) for repeat in range(len(seeds))],
    )
    logger.info("Experiment 2 finished in %.1fs", report.timing["total_seconds"])
    return report.attach_models(_trained_models(results, classifiers))


def load_payoff_fixture(path: Path) -> tuple[PayoffMatrix2x2, PayoffMatrix2x2]:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigParseError(f"invalid_value:fixture_path:{path} is unreadable") from exc
    except json.JSONDecodeError as exc:
        message = f"invalid_value:fixture_path:malformed at line {exc.lineno}"
        raise ConfigParseError(message) from exc
    if not isinstance(payload, dict) or "before" not in payload or "after" not in payload:
        raise ConfigParseError(f"invalid_value:fixture_path:{path} needs before and after")
    try:
        return (
            PayoffMatrix2x2.model_validate(payload["before"]),
            PayoffMatrix2x2.model_validate(payload["after"]),
        )
    except ValidationError as exc:
        key, _kind, message = _validation_key(exc)
        raise ConfigParseError(f"invalid_value:fixture_path:{key}:{message}") from exc


def run_egta(config: ExperimentConfig, *, max_workers: int = 1) -> RunReport:
    """Empirical payoff matrices without (B=0) and with boycotting."""
    _require_scenario(config, "egta")
    started = perf_counter()
    seeds = repeat_seeds(config)
    if config.fixture_path:
        before, after = load_payoff_fixture(Path(config.fixture_path))
    else:
        settings = scenario_settings(config)
        background = _agent_count(config) - 2
        matrices = []
        for label, ratio in (("before", 0.0), ("after", config.boycott_ratio)):
            plan = EgtaPlan(
                settings=settings,
                boycott_ratio=ratio,
                seeds=tuple(seeds),
                background_count=background,
                max_workers=max_workers,
                label=label,
            )
            matrices.append(fill_empirical_matrix(plan).matrix)
        before, after = matrices
    report = _report(
        config,
        seeds,
        started,
        payoff_before=PayoffAnalysis(matrix=before, analysis=analyze_matrix(before)),
        payoff_after=PayoffAnalysis(matrix=after, analysis=analyze_matrix(after)),
    )
    logger.info(
        "EGTA finished: enforcement before=%s after=%s",
        report.payoff_before.analysis.enforcement_holds if report.payoff_before else None,
        report.payoff_after.analysis.enforcement_holds if report.payoff_after else None,
    )
    return report


def run_detector_sweep(config: ExperimentConfig, *, max_workers: int = 1) -> RunReport:
    """Detector accuracy as a function of the observed sequence length."""
    _require_scenario(config, "detector")
    started = perf_counter()
    seeds = repeat_seeds(config)
    detector = config.detector
    corpus = trace_corpus(config, seeds[0])
    reports = length_sweep(
        corpus,
        detector.lengths,
        epochs=detector.epochs,
        seed=derive_seed(seeds[0], "sweep"),
        test_fraction=detector.test_fraction,
        learning_rate=detector.learning_rate,
        batch_size=detector.batch_size,
        hidden_widths=detector.hidden_widths,
        max_workers=max_workers,
    )
    for item in reports:
        logger.info("Sweep point L=%d: test_acc=%.3f", item.length, item.test_accuracy)
    return _report(config, seeds, started, detector_metrics=[_metric(r) for r in reports])


RUNNERS: dict[str, Callable[..., RunReport]] = {
    "exp1": run_experiment1,
    "exp2": run_experiment2,
    "egta": run_egta,
    "detector": run_detector_sweep,
}



def execute(
    config: ExperimentConfig,
    output_dir: Path | None = None,
    *,
    max_workers: int = 1,
    save_models: bool = False,
) -> tuple[RunReport, dict[str, Path]]:
    """Run the config's scenario and, given a directory, write its artifacts."""
    report = RUNNERS[config.scenario](config, max_workers=max_workers)
    if output_dir is None:
        return report, {}
    return report, emit_outputs(report, output_dir, save_models=save_models)
