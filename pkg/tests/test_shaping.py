from __future__ import annotations

import numpy as np
import pytest

from venom_module_regulation_enforcement.engine.gridworld import (
    ACTIONS,
    Action,
    AgentProfile,
    ContractViolationError,
    Observation,
    StepEvent,
    WorldSpec,
    new_world,
    run_episode,
)
from venom_module_regulation_enforcement.engine.shaping import (
    BoycottStage,
    DiminishConfig,
    DiminishStage,
    IdentityStage,
    ShapingEngine,
    StepContext,
    ThresholdStage,
    boycott_shape,
    compose_pipeline,
    diminish,
    make_diminish_config,
    threshold_diminish,
)


def _boycott_reference(raw: float, verdicts: list[bool], rewards: list[float], ratio: float):
    total = 0.0
    count = 0
    for verdict, reward in zip(verdicts, rewards):
        if verdict:
            total += reward
            count += 1
    if count == 0:
        return raw
    return raw - ratio * total / count


def _random_case(rng: np.random.Generator) -> tuple[float, list[bool], list[float], float]:
    agents = int(rng.integers(1, 9))
    verdicts = [bool(v) for v in rng.random(agents) < 0.4]
    rewards = [float(r) for r in rng.integers(0, 6, size=agents)]
    return float(rng.integers(0, 6)), verdicts, rewards, float(rng.uniform(0.0, 4.0))


def test_boycott_matches_reference_on_random_cases() -> None:
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        raw, verdicts, rewards, ratio = _random_case(rng)
        assert boycott_shape(raw, verdicts, rewards, ratio) == pytest.approx(
            _boycott_reference(raw, verdicts, rewards, ratio), rel=1e-12, abs=1e-12
        )


def test_boycott_identities_and_linearity() -> None:
    rng = np.random.default_rng(7)
    for _ in range(1000):
        raw, verdicts, rewards, ratio = _random_case(rng)
        assert boycott_shape(raw, verdicts, rewards, 0.0) == raw
        assert boycott_shape(raw, [False] * len(verdicts), rewards, ratio) == raw
        single = boycott_shape(raw, verdicts, rewards, ratio) - raw
        double = boycott_shape(raw, verdicts, rewards, 2 * ratio) - raw
        assert double == pytest.approx(2 * single, abs=1e-9)


def test_boycott_example_values() -> None:
    assert boycott_shape(3, [False, True, True], [3, 5, 5], 2.0) == pytest.approx(-7.0)
    assert boycott_shape(3, [False, True, False], [3, 5, 4], 1.0) == pytest.approx(-2.0)


def test_boycott_rejects_bad_arguments() -> None:
    with pytest.raises(ContractViolationError, match="boycott_length_mismatch"):
        boycott_shape(1.0, [True], [1.0, 2.0], 1.0)
    with pytest.raises(ContractViolationError, match="boycott_ratio_negative"):
        boycott_shape(1.0, [True], [1.0], -1.0)


@pytest.mark.parametrize("raw", [0, 3])
def test_threshold_branch_table(raw: int) -> None:
    for accumulated in range(11):
        expected = float(raw) if accumulated <= 2 else -1.0
        assert threshold_diminish(raw, accumulated, tau=2.0) == expected


def test_diminish_step_function() -> None:
    config = make_diminish_config("step", window=3, params={"tau": 2.0})

    assert diminish(3.0, [0.0, 0.0], config) == 3.0
    assert diminish(3.0, [3.0], config) == 0.0


def test_diminish_constant_is_identity() -> None:
    config = make_diminish_config("constant", window=3)

    assert diminish(4.0, [3.0, 3.0, 3.0], config) == 4.0


def test_diminish_inverse_and_exponential() -> None:
    inverse = make_diminish_config("inverse", window=2, params={"scale": 1.0})
    exponential = make_diminish_config("exponential", window=2, params={"rate": 0.5})

    assert diminish(3.0, [1.0, 2.0], inverse) == pytest.approx(0.75)
    assert diminish(3.0, [1.0, 1.0], exponential) == pytest.approx(3.0 * np.exp(-1.0))


def test_diminish_rejects_long_history() -> None:
    config = make_diminish_config("step", window=2)

    with pytest.raises(ContractViolationError, match="diminish_history_too_long"):
        diminish(1.0, [0.0, 0.0, 0.0], config)


def test_diminish_config_requires_non_increasing_function() -> None:
    with pytest.raises(ContractViolationError, match="diminish_function_increasing"):
        DiminishConfig(window=3, f=lambda accumulated: accumulated)
    with pytest.raises(ContractViolationError, match="diminish_window_invalid"):
        DiminishConfig(window=0, f=lambda _accumulated: 1.0)


def test_unknown_diminish_function() -> None:
    with pytest.raises(ContractViolationError, match="diminish_function_unknown"):
        make_diminish_config("sqrt", window=3)


def test_compose_pipeline_applies_stages_in_order() -> None:
    pipeline = compose_pipeline([ThresholdStage(tau=2.0, window=3), BoycottStage(ratio=1.0)])
    context = StepContext(
        agent_slot=0,
        history=(3.0,),
        verdicts=(False, True),
        observed_rewards=(3.0, 5.0),
    )

    assert pipeline(3.0, context) == pytest.approx(-1.0 - 5.0)
    assert pipeline.window == 3


def test_compose_pipeline_rejects_empty() -> None:
    with pytest.raises(ContractViolationError, match="pipeline_empty"):
        compose_pipeline([])


def test_identity_stage() -> None:
    context = StepContext(agent_slot=0, history=(), verdicts=(), observed_rewards=())

    assert compose_pipeline([IdentityStage()])(2.0, context) == 2.0


def test_engine_threshold_uses_previous_rewards_only() -> None:
    engine = ShapingEngine([compose_pipeline([ThresholdStage(tau=2.0, window=3)]), None])

    assert engine.shape([3, 5]) == [3.0, 5.0]
    assert engine.shape([3, 5]) == [-1.0, 5.0]
    assert engine.shape([0, 0]) == [-1.0, 0.0]
    assert engine.shape([0, 0]) == [-1.0, 0.0]
    assert engine.shape([0, 0]) == [-1.0, 0.0]
    assert engine.shape([3, 0]) == [3.0, 0.0]

    engine.reset()
    assert engine.history.recent(0) == ()


def test_engine_window_slides() -> None:
    engine = ShapingEngine([compose_pipeline([ThresholdStage(tau=2.0, window=2)])])
    engine.shape([3])
    engine.shape([0])

    assert engine.history.recent(0) == (3.0, 0.0)
    assert engine.shape([1]) == [-1.0]
    assert engine.history.recent(0) == (0.0, 1.0)
    assert engine.shape([1]) == [1.0]


def test_engine_boycott_with_verdicts() -> None:
    engine = ShapingEngine([compose_pipeline([BoycottStage(ratio=2.0)]), None])
    engine.set_verdicts([False, True])

    assert engine.shape([3, 5]) == [pytest.approx(-7.0), 5.0]


def test_engine_diminish_stage() -> None:
    config = make_diminish_config("step", window=3, params={"tau": 2.0})
    engine = ShapingEngine([compose_pipeline([DiminishStage(config)])])

    assert engine.shape([3]) == [3.0]
    assert engine.shape([3]) == [0.0]


def test_engine_validates_lengths() -> None:
    engine = ShapingEngine([None, None])

    with pytest.raises(ContractViolationError, match="verdicts_length_mismatch"):
        engine.set_verdicts([True])
    with pytest.raises(ContractViolationError, match="rewards_length_mismatch"):
        engine.shape([1.0])


def _toward_nearest_tree(observation: Observation) -> Action:
    _zx, _zy, dx, dy, _bucket, _contested = observation.features
    if abs(dx) + abs(dy) == 1:
        return next(a for a in ACTIONS if a.kind == "gather" and (a.dx, a.dy) == (dx, dy))
    sx, sy = (int(np.sign(dx)), 0) if dx else (0, int(np.sign(dy)))
    return next(a for a in ACTIONS if a.kind == "move" and (a.dx, a.dy) == (sx, sy))


class _ShapedRecorder:
    def __init__(self, engine: ShapingEngine) -> None:
        self.engine = engine
        self.shaped: list[list[float]] = []

    def on_step(self, event: StepEvent) -> None:
        self.shaped.append(self.engine.shape(event.raw_rewards))


def test_pipelines_never_change_raw_play() -> None:
    spec = WorldSpec(
        width=6,
        height=6,
        profiles=(AgentProfile(agent_id=0), AgentProfile(agent_id=1)),
        tree_count=2,
        episode_length=40,
    )
    step_config = make_diminish_config("step", window=3, params={"tau": 2.0})
    pipelines = {
        "none": [None, None],
        "threshold_boycott": [
            compose_pipeline([ThresholdStage(tau=2.0, window=3), BoycottStage(ratio=2.0)]),
            compose_pipeline([BoycottStage(ratio=1.0)]),
        ],
        "diminish": [compose_pipeline([DiminishStage(step_config)]), None],
    }

    harvested = 0
    shaping_changed = False
    for seed in range(3):
        raw: dict[str, tuple] = {}
        shaped: dict[str, list[list[float]]] = {}
        for name, pipeline in pipelines.items():
            engine = ShapingEngine(pipeline)
            engine.set_verdicts([False, True])
            recorder = _ShapedRecorder(engine)
            result = run_episode(
                new_world(spec, seed), [_toward_nearest_tree] * 2, hooks=[recorder]
            )
            raw[name] = (result.returns, [trace.steps for trace in result.traces])
            shaped[name] = recorder.shaped

        assert raw["threshold_boycott"] == raw["none"]
        assert raw["diminish"] == raw["none"]
        harvested += sum(raw["none"][0])
        shaping_changed |= shaped["threshold_boycott"] != shaped["none"]

    assert harvested > 0
    assert shaping_changed
