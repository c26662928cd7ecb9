from __future__ import annotations

import itertools
import logging
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from functools import partial
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from venom_module_regulation_enforcement.engine.detector import quota_detect
from venom_module_regulation_enforcement.engine.gridworld import (
    AgentProfile,
    ContractViolationError,
    Policy,
    WorldSpec,
)
from venom_module_regulation_enforcement.engine.parallel import run_jobs
from venom_module_regulation_enforcement.engine.shaping import BoycottStage
from venom_module_regulation_enforcement.engine.training import (
    ScenarioSettings,
    derive_seed,
    evaluate_policies,
    run_scenario,
)

logger = logging.getLogger(__name__)

EquilibriumKind = Literal["StrictNash", "WeakNash", "NotNash"]
Profile = tuple[str, ...]


class EgtaCellError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class NormalFormGame:
    """Finite game: one label tuple per player and a payoff tensor of shape (*sizes, n)."""

    strategies: tuple[tuple[str, ...], ...]
    payoffs: np.ndarray

    def __post_init__(self) -> None:
        sizes = tuple(len(labels) for labels in self.strategies)
        if not sizes or any(size == 0 for size in sizes):
            raise ContractViolationError("game_strategies_empty")
        for player, labels in enumerate(self.strategies):
            if len(set(labels)) != len(labels):
                raise ContractViolationError(f"game_labels_not_unique:player={player}")
        payoffs = np.asarray(self.payoffs, dtype=np.float64)
        if payoffs.shape != (*sizes, len(sizes)):
            raise ContractViolationError(f"game_payoff_shape:{payoffs.shape}")
        if not np.all(np.isfinite(payoffs)):
            raise ContractViolationError("game_payoff_not_finite")
        object.__setattr__(self, "payoffs", payoffs)

    @classmethod
    def from_profiles(
        cls,
        strategies: Sequence[Sequence[str]],
        payoffs: Mapping[Profile, Sequence[float]],
    ) -> NormalFormGame:
        labels = tuple(tuple(s) for s in strategies)
        tensor = np.zeros((*(len(s) for s in labels), len(labels)), dtype=np.float64)
        for profile in itertools.product(*labels):
            if profile not in payoffs:
                raise ContractViolationError(f"payoff_profile_missing:{','.join(profile)}")
            index = tuple(s.index(choice) for s, choice in zip(labels, profile))
            tensor[index] = payoffs[profile]
        return cls(strategies=labels, payoffs=tensor)

    @property
    def n(self) -> int:
        return len(self.strategies)

    def profiles(self) -> Iterator[Profile]:
        return itertools.product(*self.strategies)

    def _index(self, profile: Sequence[str]) -> tuple[int, ...]:
        if len(profile) != self.n:
            raise ContractViolationError(f"profile_length_mismatch:{len(profile)}!={self.n}")
        try:
            return tuple(labels.index(choice) for labels, choice in zip(self.strategies, profile))
        except ValueError as exc:
            raise ContractViolationError(f"profile_invalid:{','.join(profile)}") from exc

    def payoff(self, profile: Sequence[str]) -> np.ndarray:
        return self.payoffs[self._index(profile)].copy()

    def deviations(self, profile: Sequence[str], player: int) -> Iterator[tuple[str, float]]:
        for label in self.strategies[player]:
            if label == profile[player]:
                continue
            changed = list(profile)
            changed[player] = label
            yield label, float(self.payoffs[self._index(changed)][player])


@dataclass(frozen=True)
class EquilibriumClassification:
    profile: Profile
    kind: EquilibriumKind


def is_nash(game: NormalFormGame, profile: Sequence[str]) -> EquilibriumClassification:
    current = game.payoff(profile)
    tie = False
    for player in range(game.n):
        for _label, value in game.deviations(profile, player):
            if value > current[player]:
                return EquilibriumClassification(tuple(profile), "NotNash")
            if value == current[player]:
                tie = True
    return EquilibriumClassification(tuple(profile), "WeakNash" if tie else "StrictNash")


def pure_nash_set(game: NormalFormGame) -> list[EquilibriumClassification]:
    classified = (is_nash(game, profile) for profile in game.profiles())
    return [c for c in classified if c.kind != "NotNash"]


def best_responses(game: NormalFormGame, profile: Sequence[str], player: int) -> list[str]:
    values: dict[str, float] = {profile[player]: float(game.payoff(profile)[player])}
    values.update(dict(game.deviations(profile, player)))
    top = max(values.values())
    return [label for label in game.strategies[player] if values[label] == top]


def regret(game: NormalFormGame, profile: Sequence[str]) -> tuple[float, ...]:
    current = game.payoff(profile)
    gains = []
    for player in range(game.n):
        best = max((value for _l, value in game.deviations(profile, player)), default=-np.inf)
        gains.append(max(0.0, float(best - current[player])))
    return tuple(gains)


@dataclass(frozen=True)
class EnforcementResult:
    holds: bool
    margins: tuple[float, ...]


def enforcement_holds(
    game: NormalFormGame,
    labels: tuple[str, str] | Sequence[tuple[str, str]] = ("C", "D"),
) -> EnforcementResult:
    """Compare each player's C and D payoffs with every other player on C."""
    if labels and isinstance(labels[0], str):
        per_player = [tuple(labels)] * game.n
    else:
        per_player = [tuple(pair) for pair in labels]
    if len(per_player) != game.n:
        raise ContractViolationError(f"enforcement_labels_length:{len(per_player)}!={game.n}")
    for player, pair in enumerate(per_player):
        for label in pair:
            if label not in game.strategies[player]:
                raise ContractViolationError(
                    f"strategy_label_missing:player={player}:label={label}"
                )
    compliant = [pair[0] for pair in per_player]
    margins = []
    for player, (_c, defect) in enumerate(per_player):
        deviated = list(compliant)
        deviated[player] = defect
        margins.append(
            float(game.payoff(compliant)[player] - game.payoff(deviated)[player])
        )
    return EnforcementResult(holds=all(m >= 0 for m in margins), margins=tuple(margins))


class PayoffCell(BaseModel):
    profile: tuple[str, str]
    payoffs: tuple[float, float]
    standard_errors: tuple[float, float] | None = None
    episodes: int = Field(default=0, ge=0)
    seeds: list[int] = Field(default_factory=list)


class PayoffMatrix2x2(BaseModel):
    strategies: tuple[str, str] = ("C", "D")
    cells: list[PayoffCell]
    boycott_ratio: float | None = None
    label: str = ""

    @model_validator(mode="after")
    def _cells_cover_profiles(self) -> PayoffMatrix2x2:
        expected = sorted(itertools.product(self.strategies, repeat=2))
        present = sorted(cell.profile for cell in self.cells)
        if present != expected:
            raise ValueError("payoff_cells_incomplete")
        return self

    def cell(self, row: str, col: str) -> PayoffCell:
        for candidate in self.cells:
            if candidate.profile == (row, col):
                return candidate
        raise ContractViolationError(f"profile_invalid:{row},{col}")

    def to_game(self) -> NormalFormGame:
        return NormalFormGame.from_profiles(
            [self.strategies, self.strategies],
            {cell.profile: cell.payoffs for cell in self.cells},
        )


class EquilibriumEntry(BaseModel):
    profile: tuple[str, ...]
    kind: EquilibriumKind


class EquilibriumReport(BaseModel):
    equilibria: list[EquilibriumEntry]
    enforcement_holds: bool
    margins: list[float]


def analyze_matrix(matrix: PayoffMatrix2x2) -> EquilibriumReport:
    game = matrix.to_game()
    labels = (matrix.strategies[0], matrix.strategies[1])
    enforcement = enforcement_holds(game, labels)
    return EquilibriumReport(
        equilibria=[
            EquilibriumEntry(profile=c.profile, kind=c.kind) for c in pure_nash_set(game)
        ],
        enforcement_holds=enforcement.holds,
        margins=list(enforcement.margins),
    )


@dataclass(frozen=True)
class DiscountedReturnEstimate:
    means: tuple[float, ...]
    standard_errors: tuple[float, ...]
    episodes: int
    gamma: float = 1.0


def _estimate(returns: np.ndarray, gamma: float) -> DiscountedReturnEstimate:
    episodes = returns.shape[0]
    if episodes > 1:
        errors = returns.std(axis=0, ddof=1) / np.sqrt(episodes)
    else:
        errors = np.zeros(returns.shape[1])
    return DiscountedReturnEstimate(
        means=tuple(float(v) for v in returns.mean(axis=0)),
        standard_errors=tuple(float(v) for v in errors),
        episodes=episodes,
        gamma=gamma,
    )


def estimate_return(
    policies: Sequence[Policy],
    spec: WorldSpec,
    episodes: int,
    gamma: float = 1.0,
    *,
    seed: int = 0,
) -> DiscountedReturnEstimate:
    outcome = evaluate_policies(spec, policies, episodes, seed, gamma=gamma)
    return _estimate(outcome.returns, gamma)


@dataclass(frozen=True)
class EgtaPlan:
    settings: ScenarioSettings
    boycott_ratio: float
    seeds: tuple[int, ...]
    focal_count: int = 2
    background_count: int = 4
    strategies: tuple[str, str] = ("C", "D")
    max_workers: int = 1
    label: str = ""

    def profiles_for(self, cell: tuple[str, str]) -> list[AgentProfile]:
        compliant_label = self.strategies[0]
        stages = (BoycottStage(self.boycott_ratio),)
        profiles = []
        for agent_id in range(self.focal_count + self.background_count):
            is_compliant = agent_id >= self.focal_count or cell[agent_id] == compliant_label
            profiles.append(
                self.settings.profile(
                    agent_id,
                    "compliant" if is_compliant else "defective",
                    shaping=stages if is_compliant else (),
                )
            )
        return profiles


@dataclass
class EmpiricalMatrix:
    matrix: PayoffMatrix2x2
    estimates: dict[tuple[str, str], list[DiscountedReturnEstimate]] = field(
        default_factory=dict
    )


def _play_cell(plan: EgtaPlan, cell: tuple[str, str], seed: int) -> np.ndarray:
    try:
        outcome = run_scenario(
            plan.settings,
            plan.profiles_for(cell),
            derive_seed(seed, "egta", *cell),
            detector=partial(quota_detect, quota=plan.settings.quota),
        )
    except Exception as exc:
        raise EgtaCellError(f"egta_cell_failed:{''.join(cell)}:seed={seed}:{exc}") from exc
    return outcome.evaluation.returns


def fill_empirical_matrix(plan: EgtaPlan) -> EmpiricalMatrix:
    """Train and evaluate every focal-strategy cell, averaged over ``plan.seeds``."""
    if plan.focal_count != 2:
        raise ContractViolationError(f"egta_focal_count_unsupported:{plan.focal_count}")
    if plan.background_count < 0:
        raise ContractViolationError(f"egta_background_invalid:{plan.background_count}")
    if plan.settings.evaluation_episodes < 1:
        raise ContractViolationError(
            f"egta_episodes_invalid:{plan.settings.evaluation_episodes}"
        )
    if not plan.seeds:
        raise ContractViolationError("egta_seeds_empty")

    cells = list(itertools.product(plan.strategies, repeat=2))
    results = run_jobs(
        {
            (cell, seed): partial(_play_cell, plan, cell, seed)
            for cell in cells
            for seed in plan.seeds
        },
        plan.max_workers,
    )

    payoff_cells = []
    estimates: dict[tuple[str, str], list[DiscountedReturnEstimate]] = {}
    for cell in cells:
        per_seed = [results[(cell, seed)] for seed in plan.seeds]
        estimates[cell] = [_estimate(returns, 1.0) for returns in per_seed]
        pooled = np.concatenate([returns[:, : plan.focal_count] for returns in per_seed])
        summary = _estimate(pooled, 1.0)
        payoff_cells.append(
            PayoffCell(
                profile=cell,
                payoffs=(summary.means[0], summary.means[1]),
                standard_errors=(summary.standard_errors[0], summary.standard_errors[1]),
                episodes=summary.episodes,
                seeds=list(plan.seeds),
            )
        )
        logger.info(
            "EGTA cell %s (B=%s) filled: %.2f / %.2f",
            "".join(cell),
            plan.boycott_ratio,
            summary.means[0],
            summary.means[1],
        )
    matrix = PayoffMatrix2x2(
        strategies=plan.strategies,
        cells=payoff_cells,
        boycott_ratio=plan.boycott_ratio,
        label=plan.label,
    )
    return EmpiricalMatrix(matrix=matrix, estimates=estimates)
