"""Roster construction and the train-then-evaluate loop shared by every runner.

All randomness is derived from one master seed through ``derive_seed`` so a
run and its all-compliant counterfactual see the same world layouts and the
same learner streams.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from venom_module_regulation_enforcement.engine.detector import SequenceClassifier, Verdict
from venom_module_regulation_enforcement.engine.gridworld import (
    AgentProfile,
    BehaviorTrace,
    Capability,
    Cell,
    ContractViolationError,
    Policy,
    Role,
    StepEvent,
    WorldSpec,
    new_world,
    run_episode,
)
from venom_module_regulation_enforcement.engine.learner import (
    FrozenPolicy,
    IndependentLearner,
    LearnerConfig,
    Transition,
    epsilon_at,
    linear_decay_schedule,
)
from venom_module_regulation_enforcement.engine.shaping import (
    ShapingEngine,
    ShapingStage,
    compose_pipeline,
)

logger = logging.getLogger(__name__)

TraceDetector = Callable[[BehaviorTrace], Verdict]

CAPABILITY_CAPS: dict[str, tuple[int, ...]] = {
    "weak": (3, 2),
    "strong": (5,),
}


def derive_seed(master_seed: int, *tags: object) -> int:
    words = [int(master_seed) & 0xFFFFFFFF]
    for tag in tags:
        digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
        words.append(int.from_bytes(digest[:4], "little"))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def compliant_count(agent_count: int, compliance: float) -> int:
    if not 0.0 <= compliance <= 1.0:
        raise ContractViolationError(f"compliance_out_of_range:{compliance}")
    # 0.8 * 5 is 4.000000000000001 in binary; the epsilon keeps exact products exact.
    return int(math.floor(compliance * agent_count + 1e-9))


def assign_roles(agent_count: int, compliance: float, seed: int) -> list[Role]:
    """Roles by agent id: a seeded permutation picks the compliant subset."""
    count = compliant_count(agent_count, compliance)
    order = np.random.default_rng(derive_seed(seed, "roles")).permutation(agent_count)
    roles: list[Role] = ["defective"] * agent_count
    for agent_id in order[:count]:
        roles[int(agent_id)] = "compliant"
    return roles


def harvest_caps_for(
    role: Role,
    capability: Capability,
    *,
    quota: int = 3,
    defective_cap: int = 5,
) -> tuple[int, ...]:
    if capability in CAPABILITY_CAPS:
        return CAPABILITY_CAPS[capability]
    return (quota,) if role == "compliant" else (defective_cap,)


@dataclass(frozen=True)
class ScenarioSettings:
    width: int = 12
    height: int = 12
    tree_count: int = 5
    episode_length: int = 200
    walls: frozenset[Cell] = frozenset()
    zone_size: int = 4
    training_episodes: int = 2000
    evaluation_episodes: int = 50
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.6
    quota: int = 3
    defective_cap: int = 5

    def world_spec(self, profiles: Sequence[AgentProfile]) -> WorldSpec:
        return WorldSpec(
            width=self.width,
            height=self.height,
            profiles=tuple(sorted(profiles, key=lambda p: p.agent_id)),
            tree_count=self.tree_count,
            episode_length=self.episode_length,
            walls=self.walls,
            zone_size=self.zone_size,
        )

    def profile(
        self,
        agent_id: int,
        role: Role,
        capability: Capability = "standard",
        shaping: Sequence[ShapingStage] = (),
    ) -> AgentProfile:
        caps = harvest_caps_for(
            role, capability, quota=self.quota, defective_cap=self.defective_cap
        )
        return AgentProfile(
            agent_id=agent_id,
            role=role,
            capability=capability,
            harvest_caps=caps,
            shaping=tuple(shaping),
        )

    def with_budget(self, *, training: int, evaluation: int) -> ScenarioSettings:
        return replace(self, training_episodes=training, evaluation_episodes=evaluation)


def _shaping_engine(spec: WorldSpec) -> ShapingEngine:
    return ShapingEngine(
        [compose_pipeline(p.shaping) if p.shaping else None for p in spec.profiles]
    )


class _LearningHook:
    def __init__(self, learners: Sequence[IndependentLearner], engine: ShapingEngine) -> None:
        self.learners = learners
        self.engine = engine

    def on_step(self, event: StepEvent) -> None:
        shaped = self.engine.shape(event.raw_rewards)
        for learner, observation, action, reward, next_observation in zip(
            self.learners,
            event.observations,
            event.actions,
            shaped,
            event.next_observations,
        ):
            learner.remember(
                Transition(observation, action, reward, next_observation, event.terminal)
            )


def _verdicts(
    detector: TraceDetector | None, traces: Sequence[BehaviorTrace]
) -> list[Verdict]:
    if detector is None:
        return [Verdict(agent_id=t.agent_id, flagged=False, confidence=0.0) for t in traces]
    return [detector(trace) for trace in traces]


@dataclass
class TrainingOutcome:
    policies: list[FrozenPolicy]
    returns: np.ndarray
    flag_counts: np.ndarray


def train_roster(
    settings: ScenarioSettings,
    profiles: Sequence[AgentProfile],
    seed: int,
    *,
    detector: TraceDetector | None = None,
) -> TrainingOutcome:
    """Train one independent learner per agent.

    Verdicts are recomputed from the previous episode's traces at every
    episode boundary and drive both the boycott stages and the world's
    flagged set.
    """
    if settings.training_episodes < 0:
        raise ContractViolationError(
            f"training_episodes_invalid:{settings.training_episodes}"
        )
    spec = settings.world_spec(profiles)
    learners = [
        IndependentLearner(
            agent_id=profile.agent_id,
            config=settings.learner,
            rng=np.random.default_rng(derive_seed(seed, "learner", profile.agent_id)),
        )
        for profile in spec.profiles
    ]
    engine = _shaping_engine(spec)
    hook = _LearningHook(learners, engine)
    schedule = linear_decay_schedule(
        max(1, settings.training_episodes),
        start=settings.epsilon_start,
        end=settings.epsilon_end,
        fraction=settings.epsilon_decay_fraction,
    )
    returns = np.zeros((settings.training_episodes, len(learners)), dtype=np.float64)
    flag_counts = np.zeros(len(learners), dtype=np.int64)
    flagged = [False] * len(learners)
    for episode in range(settings.training_episodes):
        world = new_world(spec, derive_seed(seed, "train", episode))
        world.flagged = frozenset(p.agent_id for p, f in zip(spec.profiles, flagged) if f)
        engine.reset()
        engine.set_verdicts(flagged)
        epsilon = epsilon_at(schedule, episode)
        for learner in learners:
            learner.epsilon = epsilon
        result = run_episode(world, learners, hooks=[hook])
        returns[episode] = result.returns
        flagged = [v.flagged for v in _verdicts(detector, result.traces)]
        flag_counts += np.asarray(flagged, dtype=np.int64)
    if settings.training_episodes:
        logger.debug(
            "Trained %d agents for %d episodes (seed=%s)",
            len(learners),
            settings.training_episodes,
            seed,
        )
    return TrainingOutcome(
        policies=[learner.freeze() for learner in learners],
        returns=returns,
        flag_counts=flag_counts,
    )


@dataclass
class EvaluationOutcome:
    returns: np.ndarray
    flag_counts: np.ndarray
    traces: list[list[BehaviorTrace]] = field(default_factory=list)

    @property
    def episodes(self) -> int:
        return int(self.returns.shape[0])


def _discounted(trace: BehaviorTrace, gamma: float) -> float:
    return float(sum(reward * gamma**step for step, _action, reward in trace.steps))


def evaluate_policies(
    spec: WorldSpec,
    policies: Sequence[Policy],
    episodes: int,
    seed: int,
    *,
    detector: TraceDetector | None = None,
    gamma: float = 1.0,
    keep_traces: bool = False,
) -> EvaluationOutcome:
    """Roll out fixed policies; evaluation seeds never overlap training seeds."""
    if episodes < 1:
        raise ContractViolationError(f"evaluation_episodes_invalid:{episodes}")
    if not 0.0 <= gamma <= 1.0:
        raise ContractViolationError(f"gamma_out_of_range:{gamma}")
    returns = np.zeros((episodes, len(spec.profiles)), dtype=np.float64)
    flag_counts = np.zeros(len(spec.profiles), dtype=np.int64)
    kept: list[list[BehaviorTrace]] = []
    flagged = [False] * len(spec.profiles)
    for episode in range(episodes):
        world = new_world(spec, derive_seed(seed, "evaluate", episode))
        world.flagged = frozenset(p.agent_id for p, f in zip(spec.profiles, flagged) if f)
        result = run_episode(world, policies)
        if gamma < 1.0:
            returns[episode] = [_discounted(trace, gamma) for trace in result.traces]
        else:
            returns[episode] = result.returns
        flagged = [v.flagged for v in _verdicts(detector, result.traces)]
        flag_counts += np.asarray(flagged, dtype=np.int64)
        if keep_traces:
            kept.append(result.traces)
    return EvaluationOutcome(returns=returns, flag_counts=flag_counts, traces=kept)


@dataclass
class ScenarioOutcome:
    profiles: tuple[AgentProfile, ...]
    training: TrainingOutcome
    evaluation: EvaluationOutcome


@dataclass
class TrainedModels:
    """Frozen policies and classifiers of a run, keyed by run label."""

    policies: dict[str, list[FrozenPolicy]] = field(default_factory=dict)
    classifiers: dict[str, SequenceClassifier] = field(default_factory=dict)


def run_scenario(
    settings: ScenarioSettings,
    profiles: Sequence[AgentProfile],
    seed: int,
    *,
    detector: TraceDetector | None = None,
    gamma: float = 1.0,
    keep_traces: bool = False,
) -> ScenarioOutcome:
    spec = settings.world_spec(profiles)
    training = train_roster(settings, spec.profiles, seed, detector=detector)
    evaluation = evaluate_policies(
        spec,
        training.policies,
        settings.evaluation_episodes,
        seed,
        detector=detector,
        gamma=gamma,
        keep_traces=keep_traces,
    )
    return ScenarioOutcome(profiles=spec.profiles, training=training, evaluation=evaluation)
