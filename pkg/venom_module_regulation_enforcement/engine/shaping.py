"""Reward shaping operators.

Every operator maps a raw environment reward to a learning signal. Operators
are pure; per-agent state (the recent reward window) lives in
``RewardHistory`` and is owned by ``ShapingEngine``.
"""

from __future__ import annotations

import math
from collections import deque
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import partial
from typing import Protocol

import numpy as np

from venom_module_regulation_enforcement.engine.gridworld import ContractViolationError

DiminishFunction = Callable[[float], float]


def _constant(_accumulated: float) -> float:
    return 1.0


def _inverse(accumulated: float, *, scale: float = 1.0) -> float:
    return 1.0 / (1.0 + scale * accumulated)


def _exponential(accumulated: float, *, rate: float = 1.0) -> float:
    return math.exp(-rate * accumulated)


def _step(accumulated: float, *, tau: float = 2.0, low: float = 0.0) -> float:
    return 1.0 if accumulated <= tau else low


# Parameters are bound with functools.partial; bound configs must pickle.
DIMINISH_FUNCTIONS: dict[str, Callable[..., float]] = {
    "constant": _constant,
    "inverse": _inverse,
    "exponential": _exponential,
    "step": _step,
}


@dataclass(frozen=True)
class DiminishConfig:
    window: int
    f: DiminishFunction
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ContractViolationError(f"diminish_window_invalid:{self.window}")
        samples = [self.f(float(value)) for value in np.linspace(0.0, 10.0 * self.window, 101)]
        if any(later > earlier for earlier, later in zip(samples, samples[1:])):
            raise ContractViolationError(f"diminish_function_increasing:{self.name}")


def make_diminish_config(
    name: str, *, window: int, params: dict[str, float] | None = None
) -> DiminishConfig:
    function = DIMINISH_FUNCTIONS.get(name)
    if function is None:
        raise ContractViolationError(f"diminish_function_unknown:{name}")
    bound = partial(function, **(params or {}))
    try:
        bound(0.0)
    except TypeError as exc:
        raise ContractViolationError(f"diminish_params_invalid:{name}:{exc}") from exc
    return DiminishConfig(window=window, f=bound, name=name)


def diminish(raw_reward: float, history: Sequence[float], config: DiminishConfig) -> float:
    if len(history) > config.window:
        raise ContractViolationError(f"diminish_history_too_long:{len(history)}")
    return raw_reward * config.f(float(sum(history)))


def threshold_diminish(raw_reward: float, accumulated: float, tau: float = 2.0) -> float:
    return float(raw_reward) if accumulated <= tau else -1.0


def boycott_shape(
    raw_reward: float,
    verdicts: Sequence[bool],
    observed_rewards: Sequence[float],
    ratio: float,
) -> float:
    if len(verdicts) != len(observed_rewards):
        raise ContractViolationError(
            f"boycott_length_mismatch:{len(verdicts)}!={len(observed_rewards)}"
        )
    if ratio < 0:
        raise ContractViolationError(f"boycott_ratio_negative:{ratio}")
    flagged = [float(reward) for verdict, reward in zip(verdicts, observed_rewards) if verdict]
    if not flagged or ratio == 0:
        return float(raw_reward)
    return float(raw_reward) - ratio * (sum(flagged) / len(flagged))


@dataclass(frozen=True)
class StepContext:
    agent_slot: int
    history: tuple[float, ...]
    verdicts: tuple[bool, ...]
    observed_rewards: tuple[float, ...]


def _tail(history: tuple[float, ...], window: int) -> tuple[float, ...]:
    if window <= 0:
        return ()
    return history[-window:]


class ShapingStage(Protocol):
    name: str
    window: int

    def __call__(self, reward: float, context: StepContext) -> float: ...


@dataclass(frozen=True)
class IdentityStage:
    name: str = "identity"
    window: int = 0

    def __call__(self, reward: float, context: StepContext) -> float:
        return float(reward)


@dataclass(frozen=True)
class DiminishStage:
    config: DiminishConfig
    name: str = "diminish"

    @property
    def window(self) -> int:
        return self.config.window

    def __call__(self, reward: float, context: StepContext) -> float:
        return diminish(reward, _tail(context.history, self.window), self.config)


@dataclass(frozen=True)
class ThresholdStage:
    tau: float = 2.0
    window: int = 3
    name: str = "threshold"

    def __call__(self, reward: float, context: StepContext) -> float:
        return threshold_diminish(reward, sum(_tail(context.history, self.window)), self.tau)


@dataclass(frozen=True)
class BoycottStage:
    ratio: float
    name: str = "boycott"
    window: int = 0

    def __call__(self, reward: float, context: StepContext) -> float:
        return boycott_shape(reward, context.verdicts, context.observed_rewards, self.ratio)


@dataclass(frozen=True)
class ShapingPipeline:
    stages: tuple[ShapingStage, ...]

    @property
    def window(self) -> int:
        return max((stage.window for stage in self.stages), default=0)

    def __call__(self, raw_reward: float, context: StepContext) -> float:
        value = float(raw_reward)
        for stage in self.stages:
            value = stage(value, context)
        return value


def compose_pipeline(stages: Sequence[ShapingStage]) -> ShapingPipeline:
    if not stages:
        raise ContractViolationError("pipeline_empty")
    return ShapingPipeline(stages=tuple(stages))


@dataclass
class RewardHistory:
    agent_count: int
    window: int
    _windows: list[deque[float]] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        self._windows = [deque(maxlen=max(1, self.window)) for _ in range(self.agent_count)]

    def recent(self, slot: int) -> tuple[float, ...]:
        return tuple(self._windows[slot])

    def accumulated(self, slot: int) -> float:
        return float(sum(self._windows[slot]))

    def record(self, raw_rewards: Sequence[float]) -> None:
        for window, reward in zip(self._windows, raw_rewards):
            window.append(float(reward))

    def clear(self) -> None:
        for window in self._windows:
            window.clear()


class ShapingEngine:
    """Applies each agent's pipeline to one step of raw rewards."""

    def __init__(self, pipelines: Sequence[ShapingPipeline | None]) -> None:
        self.pipelines = list(pipelines)
        window = max((p.window for p in self.pipelines if p is not None), default=0)
        self.history = RewardHistory(agent_count=len(self.pipelines), window=window)
        self.verdicts: tuple[bool, ...] = tuple(False for _ in self.pipelines)

    def set_verdicts(self, verdicts: Sequence[bool]) -> None:
        if len(verdicts) != len(self.pipelines):
            raise ContractViolationError(
                f"verdicts_length_mismatch:{len(verdicts)}!={len(self.pipelines)}"
            )
        self.verdicts = tuple(bool(v) for v in verdicts)

    def shape(self, raw_rewards: Sequence[float]) -> list[float]:
        if len(raw_rewards) != len(self.pipelines):
            raise ContractViolationError(
                f"rewards_length_mismatch:{len(raw_rewards)}!={len(self.pipelines)}"
            )
        observed = tuple(float(r) for r in raw_rewards)
        shaped: list[float] = []
        for slot, (pipeline, raw) in enumerate(zip(self.pipelines, raw_rewards)):
            if pipeline is None:
                shaped.append(float(raw))
                continue
            context = StepContext(
                agent_slot=slot,
                history=self.history.recent(slot),
                verdicts=self.verdicts,
                observed_rewards=observed,
            )
            shaped.append(pipeline(raw, context))
        # The window holds rewards from earlier steps only, so it is updated last.
        self.history.record(raw_rewards)
        return shaped

    def reset(self) -> None:
        self.history.clear()
