from __future__ import annotations

import json
import logging
from collections import deque
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from venom_module_regulation_enforcement.engine.gridworld import (
    ACTION_COUNT,
    ACTIONS,
    Action,
    ContractViolationError,
    Observation,
)

logger = logging.getLogger(__name__)

APPROXIMATOR_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Transition:
    observation: Observation
    action: Action
    shaped_reward: float
    next_observation: Observation
    terminal: bool


class ReplayBuffer:
    def __init__(self, capacity: int = 5000) -> None:
        if capacity <= 0:
            raise ContractViolationError(f"buffer_capacity_invalid:{capacity}")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def push(self, transition: Transition) -> None:
        self._items.append(transition)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            raise ContractViolationError("replay_buffer_empty")
        size = min(batch_size, len(self._items))
        picks = rng.choice(len(self._items), size=size, replace=False)
        return [self._items[int(index)] for index in picks]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self._items)


class ValueApproximator(Protocol):
    def values(self, observation: Observation) -> np.ndarray: ...

    def update(self, batch: Sequence[Transition], alpha: float, gamma: float) -> float: ...


class TabularApproximator:
    """Action-value table keyed by the discretized observation features."""

    kind = "tabular"

    def __init__(self, initial_value: float = 0.0) -> None:
        self.initial_value = float(initial_value)
        self._table: dict[tuple[int, ...], np.ndarray] = {}

    def _row(self, key: tuple[int, ...]) -> np.ndarray:
        row = self._table.get(key)
        if row is None:
            row = np.full(ACTION_COUNT, self.initial_value, dtype=np.float64)
            self._table[key] = row
        return row

    def values(self, observation: Observation) -> np.ndarray:
        row = self._table.get(observation.features)
        if row is None:
            return np.full(ACTION_COUNT, self.initial_value, dtype=np.float64)
        return row.copy()

    def update(self, batch: Sequence[Transition], alpha: float, gamma: float) -> float:
        table = self._table
        initial = self.initial_value
        # Errors are taken against the table as it was before the batch.
        errors: list[float] = []
        for t in batch:
            row = table.get(t.observation.features)
            current = initial if row is None else float(row[t.action.index])
            if t.terminal:
                bootstrap = 0.0
            else:
                following = table.get(t.next_observation.features)
                bootstrap = initial if following is None else float(following.max())
            errors.append(t.shaped_reward + gamma * bootstrap - current)
        if alpha > 0.0:
            for transition, error in zip(batch, errors):
                self._row(transition.observation.features)[transition.action.index] += (
                    alpha * error
                )
        return float(np.mean(np.square(errors)))

    def copy(self) -> TabularApproximator:
        clone = TabularApproximator(self.initial_value)
        clone._table = {key: row.copy() for key, row in self._table.items()}
        return clone

    def __len__(self) -> int:
        return len(self._table)


@dataclass(frozen=True)
class EpsilonSchedule:
    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        previous_step: float | None = None
        previous_epsilon: float | None = None
        for point_step, epsilon in self.breakpoints:
            if not 0.0 <= epsilon <= 1.0:
                raise ContractViolationError(f"epsilon_out_of_range:{epsilon}")
            if previous_step is not None and point_step <= previous_step:
                raise ContractViolationError("epsilon_breakpoints_not_ascending")
            if previous_epsilon is not None and epsilon > previous_epsilon:
                raise ContractViolationError("epsilon_schedule_increasing")
            previous_step, previous_epsilon = point_step, epsilon


def linear_decay_schedule(
    total_steps: int,
    *,
    start: float = 1.0,
    end: float = 0.05,
    fraction: float = 0.6,
) -> EpsilonSchedule:
    horizon = max(1, int(round(total_steps * fraction)))
    return EpsilonSchedule(breakpoints=((0, start), (horizon, end)))


def epsilon_at(schedule: EpsilonSchedule, step: float) -> float:
    if not schedule.breakpoints:
        raise ContractViolationError("epsilon_schedule_empty")
    if step < 0:
        raise ContractViolationError(f"epsilon_step_negative:{step}")
    steps = [point for point, _epsilon in schedule.breakpoints]
    epsilons = [epsilon for _point, epsilon in schedule.breakpoints]
    return float(np.interp(step, steps, epsilons))


def greedy_action(approximator: ValueApproximator, observation: Observation) -> Action:
    values = approximator.values(observation)
    if len(values) != ACTION_COUNT:
        raise ContractViolationError(f"approximator_output_length:{len(values)}")
    # np.argmax returns the first maximum, i.e. the lowest action index on ties.
    return ACTIONS[int(np.argmax(values))]


def select_action(
    approximator: ValueApproximator,
    observation: Observation,
    epsilon: float,
    rng: np.random.Generator,
) -> Action:
    if not 0.0 <= epsilon <= 1.0:
        raise ContractViolationError(f"epsilon_out_of_range:{epsilon}")
    if rng.random() < epsilon:
        return ACTIONS[int(rng.integers(ACTION_COUNT))]
    return greedy_action(approximator, observation)


def td_update(
    approximator: ValueApproximator,
    batch: Sequence[Transition],
    alpha: float,
    gamma: float,
) -> tuple[ValueApproximator, float]:
    if not batch:
        raise ContractViolationError("td_batch_empty")
    if alpha < 0.0:
        raise ContractViolationError(f"td_alpha_negative:{alpha}")
    if not 0.0 <= gamma <= 1.0:
        raise ContractViolationError(f"td_gamma_out_of_range:{gamma}")
    loss = approximator.update(batch, alpha, gamma)
    return approximator, loss


@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = 0.95
    alpha: float = 0.1
    batch_size: int = 32
    buffer_capacity: int = 5000
    train_every: int = 4


class FrozenPolicy:
    """Greedy policy over a snapshot of an approximator."""

    def __init__(self, approximator: TabularApproximator) -> None:
        self.approximator = approximator.copy()

    def __call__(self, observation: Observation) -> Action:
        return greedy_action(self.approximator, observation)


class IndependentLearner:
    def __init__(
        self,
        agent_id: int,
        config: LearnerConfig,
        rng: np.random.Generator,
        approximator: TabularApproximator | None = None,
    ) -> None:
        self.agent_id = agent_id
        self.config = config
        self.rng = rng
        self.approximator = approximator or TabularApproximator()
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.epsilon = 1.0
        self.last_loss: float | None = None
        self._remembered = 0

    def __call__(self, observation: Observation) -> Action:
        return select_action(self.approximator, observation, self.epsilon, self.rng)

    def remember(self, transition: Transition) -> None:
        self.buffer.push(transition)
        self._remembered += 1
        if self._remembered % self.config.train_every:
            return
        if len(self.buffer) < self.config.batch_size:
            return
        batch = self.buffer.sample(self.config.batch_size, self.rng)
        _, self.last_loss = td_update(
            self.approximator, batch, self.config.alpha, self.config.gamma
        )

    def freeze(self) -> FrozenPolicy:
        return FrozenPolicy(self.approximator)


def save_approximator(approximator: TabularApproximator, path: Path) -> Path:
    entries = [
        {"key": list(key), "values": [float(v) for v in row]}
        for key, row in sorted(approximator._table.items())
    ]
    payload = {
        "format_version": APPROXIMATOR_FORMAT_VERSION,
        "kind": approximator.kind,
        "action_count": ACTION_COUNT,
        "initial_value": approximator.initial_value,
        "entries": entries,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
    return path


def load_approximator(path: Path) -> TabularApproximator:
    payload = json.loads(path.read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != APPROXIMATOR_FORMAT_VERSION:
        raise ValueError(f"approximator_format_unsupported:{version}")
    if payload.get("kind") != TabularApproximator.kind:
        raise ValueError(f"approximator_kind_unsupported:{payload.get('kind')}")
    if payload.get("action_count") != ACTION_COUNT:
        raise ValueError(f"approximator_action_count_mismatch:{payload.get('action_count')}")
    approximator = TabularApproximator(float(payload.get("initial_value", 0.0)))
    for entry in payload.get("entries", []):
        if not isinstance(entry, dict):
            continue
        approximator._table[tuple(int(v) for v in entry["key"])] = np.asarray(
            entry["values"], dtype=np.float64
        )
    logger.debug("Loaded %d approximator entries from %s", len(approximator), path)
    return approximator
