from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Literal, Protocol

import numpy as np

if TYPE_CHECKING:
    from venom_module_regulation_enforcement.engine.shaping import ShapingStage

logger = logging.getLogger(__name__)

VIEW_RANGE = 2
MOVE_RANGE = 3
GATHER_RANGE = 1
TREE_DEATH_THRESHOLD = 5
FEATURE_OFFSET_CLIP = 4
SPATIAL_CHANNELS: tuple[str, ...] = ("agents", "walls", "trees")

Cell = tuple[int, int]
ActionKind = Literal["move", "gather"]
Role = Literal["compliant", "defective"]
Capability = Literal["standard", "weak", "strong"]


class ContractViolationError(ValueError):
    pass


class WorldConstructionError(ValueError):
    pass


class AgentNotFoundError(KeyError):
    pass


@dataclass(frozen=True)
class Action:
    index: int
    kind: ActionKind
    dx: int
    dy: int


def _enumerate_actions() -> tuple[Action, ...]:
    span = range(-MOVE_RANGE, MOVE_RANGE + 1)
    moves = [(dx, dy) for dx in span for dy in span if dx * dx + dy * dy <= MOVE_RANGE**2]
    # Stay comes first so an untrained greedy policy idles instead of wandering.
    moves.sort(key=lambda offset: (offset[0] ** 2 + offset[1] ** 2, offset[0], offset[1]))
    gathers = sorted(
        (dx, dy)
        for dx in range(-GATHER_RANGE, GATHER_RANGE + 1)
        for dy in range(-GATHER_RANGE, GATHER_RANGE + 1)
        if dx * dx + dy * dy == GATHER_RANGE**2
    )
    actions = [Action(index, "move", dx, dy) for index, (dx, dy) in enumerate(moves)]
    actions.extend(
        Action(len(moves) + index, "gather", dx, dy) for index, (dx, dy) in enumerate(gathers)
    )
    return tuple(actions)


ACTIONS: tuple[Action, ...] = _enumerate_actions()
ACTION_COUNT = len(ACTIONS)
NOOP = ACTIONS[0]


def action_from_index(index: int) -> Action:
    if not 0 <= index < ACTION_COUNT:
        raise ContractViolationError(f"action_index_out_of_range:{index}")
    return ACTIONS[index]


def _as_action(value: Action | int) -> Action:
    if isinstance(value, Action):
        return value
    return action_from_index(int(value))


@dataclass(frozen=True)
class AgentProfile:
    agent_id: int
    role: Role = "compliant"
    capability: Capability = "standard"
    harvest_caps: tuple[int, ...] = (3,)
    shaping: tuple[ShapingStage, ...] = ()

    def harvest_cap_at(self, gather_count: int) -> int:
        """Cap for the agent's next gather; cycles through ``harvest_caps``."""
        return self.harvest_caps[gather_count % len(self.harvest_caps)]


@dataclass
class AppleTree:
    position: Cell
    harvested_total: int = 0


@dataclass
class AgentState:
    agent_id: int
    position: Cell
    last_action: Action = NOOP
    last_reward: int = 0
    episode_return: int = 0
    gathers: int = 0


@dataclass(frozen=True)
class WorldSpec:
    width: int
    height: int
    profiles: tuple[AgentProfile, ...]
    tree_count: int
    episode_length: int
    walls: frozenset[Cell] = frozenset()
    zone_size: int = 4


@dataclass(frozen=True)
class WorldView:
    """What one agent could see at observation time, frozen against later steps."""

    width: int
    height: int
    walls: frozenset[Cell]
    position: Cell
    agent_positions: tuple[Cell, ...]
    tree_positions: tuple[Cell, ...]
    last_action_index: int
    last_reward: int


@dataclass(eq=False)
class Observation:
    agent_id: int
    # (zone_x, zone_y, tree_dx, tree_dy, reward_bucket, contested)
    features: tuple[int, ...]
    view: WorldView | None = field(default=None, repr=False)

    def _require_view(self) -> WorldView:
        if self.view is None:
            raise ContractViolationError(f"observation_view_missing:{self.agent_id}")
        return self.view

    @cached_property
    def spatial(self) -> np.ndarray:
        view = self._require_view()
        side = 2 * VIEW_RANGE + 1
        spatial = np.zeros((side, side, len(SPATIAL_CHANNELS)), dtype=np.float32)
        others = set(view.agent_positions) - {view.position}
        trees = set(view.tree_positions)
        x, y = view.position
        for dx in range(-VIEW_RANGE, VIEW_RANGE + 1):
            for dy in range(-VIEW_RANGE, VIEW_RANGE + 1):
                if dx * dx + dy * dy > VIEW_RANGE**2:
                    continue
                cell = (x + dx, y + dy)
                slot = (VIEW_RANGE + dx, VIEW_RANGE + dy)
                inside = 0 <= cell[0] < view.width and 0 <= cell[1] < view.height
                if not inside or cell in view.walls:
                    spatial[slot[0], slot[1], 1] = 1.0
                    continue
                if cell in others:
                    spatial[slot[0], slot[1], 0] = 1.0
                if cell in trees:
                    spatial[slot[0], slot[1], 2] = 1.0
        return spatial

    @cached_property
    def nonspatial(self) -> np.ndarray:
        view = self._require_view()
        last_action = np.zeros(ACTION_COUNT, dtype=np.float32)
        last_action[view.last_action_index] = 1.0
        positions = view.agent_positions + view.tree_positions
        own = (
            view.position[0] / max(1, view.width - 1),
            view.position[1] / max(1, view.height - 1),
        )
        return np.concatenate(
            [
                last_action,
                np.asarray([view.last_reward], dtype=np.float32),
                np.asarray(positions, dtype=np.float32).reshape(-1),
                np.asarray(own, dtype=np.float32),
            ]
        )


@dataclass
class BehaviorTrace:
    agent_id: int
    steps: list[tuple[int, int, int]] = field(default_factory=list)

    def append(self, step: int, action_index: int, raw_reward: int) -> None:
        if self.steps and step <= self.steps[-1][0]:
            raise ContractViolationError(f"trace_steps_not_increasing:{step}")
        if raw_reward < 0:
            raise ContractViolationError(f"trace_negative_reward:{raw_reward}")
        self.steps.append((step, action_index, raw_reward))

    @property
    def rewards(self) -> np.ndarray:
        return np.asarray([reward for _step, _action, reward in self.steps], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.steps)


class GridWorld:
    def __init__(self, spec: WorldSpec, rng: np.random.Generator) -> None:
        self.spec = spec
        self.width = spec.width
        self.height = spec.height
        self.walls: frozenset[Cell] = spec.walls
        self.episode_length = spec.episode_length
        self.profiles: dict[int, AgentProfile] = {p.agent_id: p for p in spec.profiles}
        self.trees: list[AppleTree] = []
        self.retired_trees: list[AppleTree] = []
        self.agents: list[AgentState] = []
        self.step_index = 0
        self.flagged: frozenset[int] = frozenset()
        self.rng = rng

    @property
    def done(self) -> bool:
        return self.step_index >= self.episode_length

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def agent(self, agent_id: int) -> AgentState:
        for state in self.agents:
            if state.agent_id == agent_id:
                return state
        raise AgentNotFoundError(f"agent_not_found:{agent_id}")

    def free_cells(self, *, skip_tree: int | None = None) -> list[Cell]:
        taken = {a.position for a in self.agents} | {
            t.position for index, t in enumerate(self.trees) if index != skip_tree
        }
        return [
            (x, y)
            for x in range(self.width)
            for y in range(self.height)
            if (x, y) not in self.walls and (x, y) not in taken
        ]

    def harvested_total(self) -> int:
        return sum(t.harvested_total for t in self.trees) + sum(
            t.harvested_total for t in self.retired_trees
        )


def new_world(spec: WorldSpec, seed: int) -> GridWorld:
    if spec.width <= 0 or spec.height <= 0:
        raise WorldConstructionError(f"grid_dimensions_invalid:{spec.width}x{spec.height}")
    if spec.episode_length <= 0:
        raise WorldConstructionError("episode_length_invalid")
    if spec.tree_count < 0:
        raise WorldConstructionError("tree_count_invalid")
    if spec.zone_size <= 0:
        raise WorldConstructionError("zone_size_invalid")
    ids = [p.agent_id for p in spec.profiles]
    if len(set(ids)) != len(ids):
        raise WorldConstructionError("agent_ids_not_unique")
    outside = [
        cell
        for cell in spec.walls
        if not (0 <= cell[0] < spec.width and 0 <= cell[1] < spec.height)
    ]
    if outside:
        raise WorldConstructionError(f"wall_out_of_bounds:{sorted(outside)[0]}")

    world = GridWorld(spec, np.random.default_rng(seed))
    free = world.free_cells()
    needed = len(spec.profiles) + spec.tree_count
    if needed > len(free):
        raise WorldConstructionError(f"grid_capacity_exceeded:{needed}>{len(free)}")
    picks = world.rng.choice(len(free), size=needed, replace=False)
    cells = [free[int(index)] for index in picks]
    for profile, cell in zip(sorted(spec.profiles, key=lambda p: p.agent_id), cells):
        world.agents.append(AgentState(agent_id=profile.agent_id, position=cell))
    world.trees = [AppleTree(position=cell) for cell in cells[len(spec.profiles):]]
    logger.debug(
        "Grid world %dx%d created (seed=%s, agents=%d, trees=%d)",
        spec.width,
        spec.height,
        seed,
        len(spec.profiles),
        spec.tree_count,
    )
    return world


def step(world: GridWorld, joint_actions: Sequence[Action | int]) -> list[int]:
    if world.done:
        raise ContractViolationError("episode_finished")
    if len(joint_actions) != len(world.agents):
        raise ContractViolationError(
            f"joint_actions_length_mismatch:{len(joint_actions)}!={len(world.agents)}"
        )
    actions = [_as_action(value) for value in joint_actions]
    tree_at = {tree.position: tree for tree in world.trees}
    occupied = {state.position for state in world.agents}
    rewards = [0] * len(world.agents)

    # Agents are kept sorted by id, so list order is the tie-break order.
    for state, action in zip(world.agents, actions):
        if action.kind != "move" or (action.dx == 0 and action.dy == 0):
            continue
        target = (state.position[0] + action.dx, state.position[1] + action.dy)
        if (
            not world.in_bounds(target)
            or target in world.walls
            or target in occupied
            or target in tree_at
        ):
            continue
        occupied.discard(state.position)
        occupied.add(target)
        state.position = target

    for slot, (state, action) in enumerate(zip(world.agents, actions)):
        if action.kind != "gather":
            continue
        tree = tree_at.get((state.position[0] + action.dx, state.position[1] + action.dy))
        if tree is None:
            continue
        amount = world.profiles[state.agent_id].harvest_cap_at(state.gathers)
        tree.harvested_total += amount
        state.gathers += 1
        rewards[slot] = amount

    for index, tree in enumerate(world.trees):
        if tree.harvested_total <= TREE_DEATH_THRESHOLD:
            continue
        world.retired_trees.append(tree)
        # The dead tree's own cell is eligible for the respawn.
        free = world.free_cells(skip_tree=index)
        world.trees[index] = AppleTree(position=free[int(world.rng.integers(len(free)))])

    for slot, (state, action) in enumerate(zip(world.agents, actions)):
        state.last_action = action
        state.last_reward = rewards[slot]
        state.episode_return += rewards[slot]
    world.step_index += 1
    return rewards


def _reward_bucket(reward: int) -> int:
    if reward <= 0:
        return 0
    return 1 if reward <= 3 else 2


def _features(world: GridWorld, state: AgentState) -> tuple[int, ...]:
    x, y = state.position
    zone = (x // world.spec.zone_size, y // world.spec.zone_size)
    bucket = _reward_bucket(state.last_reward)
    if not world.trees:
        return (*zone, 0, 0, bucket, 0)
    nearest = min(
        world.trees,
        key=lambda t: (t.position[0] - x) ** 2 + (t.position[1] - y) ** 2,
    )
    tx, ty = nearest.position
    dx = max(-FEATURE_OFFSET_CLIP, min(FEATURE_OFFSET_CLIP, tx - x))
    dy = max(-FEATURE_OFFSET_CLIP, min(FEATURE_OFFSET_CLIP, ty - y))
    own_distance = abs(tx - x) + abs(ty - y)
    contested = any(
        other.agent_id != state.agent_id
        and other.agent_id in world.flagged
        and abs(tx - other.position[0]) + abs(ty - other.position[1]) <= own_distance
        for other in world.agents
    )
    return (*zone, dx, dy, bucket, int(contested))


def observe(world: GridWorld, agent_id: int) -> Observation:
    state = world.agent(agent_id)
    view = WorldView(
        width=world.width,
        height=world.height,
        walls=world.walls,
        position=state.position,
        agent_positions=tuple(a.position for a in world.agents),
        tree_positions=tuple(t.position for t in world.trees),
        last_action_index=state.last_action.index,
        last_reward=state.last_reward,
    )
    return Observation(agent_id=agent_id, features=_features(world, state), view=view)


def render_text(world: GridWorld) -> str:
    glyphs = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    grid = [["." for _ in range(world.width)] for _ in range(world.height)]
    for x, y in world.walls:
        grid[y][x] = "#"
    for tree in world.trees:
        grid[tree.position[1]][tree.position[0]] = "T"
    for state in world.agents:
        grid[state.position[1]][state.position[0]] = glyphs[state.agent_id % len(glyphs)]
    header = f"step {world.step_index}/{world.episode_length}"
    return "\n".join([header, *("".join(row) for row in grid)])


@dataclass(frozen=True)
class StepEvent:
    world: GridWorld
    step_index: int
    observations: list[Observation]
    actions: list[Action]
    raw_rewards: list[int]
    next_observations: list[Observation]
    terminal: bool


class EpisodeHook(Protocol):
    def on_step(self, event: StepEvent) -> None: ...


Policy = Callable[[Observation], Action | int]


@dataclass
class EpisodeResult:
    returns: list[int]
    traces: list[BehaviorTrace]


def run_episode(
    world: GridWorld,
    policies: Sequence[Policy],
    hooks: Sequence[EpisodeHook] = (),
) -> EpisodeResult:
    if len(policies) != len(world.agents):
        raise ContractViolationError(
            f"policies_length_mismatch:{len(policies)}!={len(world.agents)}"
        )
    traces = [BehaviorTrace(agent_id=state.agent_id) for state in world.agents]
    observations = [observe(world, state.agent_id) for state in world.agents]
    while not world.done:
        actions = [_as_action(policy(obs)) for policy, obs in zip(policies, observations)]
        step_index = world.step_index
        rewards = step(world, actions)
        for trace, action, reward in zip(traces, actions, rewards):
            trace.append(step_index, action.index, reward)
        next_observations = [observe(world, state.agent_id) for state in world.agents]
        event = StepEvent(
            world=world,
            step_index=step_index,
            observations=observations,
            actions=actions,
            raw_rewards=rewards,
            next_observations=next_observations,
            terminal=world.done,
        )
        for hook in hooks:
            hook.on_step(event)
        observations = next_observations
    return EpisodeResult(returns=[state.episode_return for state in world.agents], traces=traces)
