from __future__ import annotations

import itertools
import json
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from venom_module_regulation_enforcement.engine import gametheory as gametheory_module
from venom_module_regulation_enforcement.engine.gametheory import (
    EgtaCellError,
    EgtaPlan,
    NormalFormGame,
    PayoffMatrix2x2,
    analyze_matrix,
    best_responses,
    enforcement_holds,
    estimate_return,
    fill_empirical_matrix,
    is_nash,
    pure_nash_set,
    regret,
)
from venom_module_regulation_enforcement.engine.gridworld import (
    ACTIONS,
    AgentProfile,
    ContractViolationError,
    Observation,
    WorldSpec,
)
from venom_module_regulation_enforcement.engine.learner import LearnerConfig
from venom_module_regulation_enforcement.engine.training import ScenarioSettings

FIXTURES = Path(__file__).resolve().parent / "fixtures"


def _fixture_matrix(name: str) -> PayoffMatrix2x2:
    payload = json.loads((FIXTURES / "payoff_matrices.json").read_text(encoding="utf-8"))
    return PayoffMatrix2x2.model_validate(payload[name])


def _two_by_two(cells: dict[tuple[str, str], tuple[float, float]], labels=("A", "B")):
    return NormalFormGame.from_profiles([labels, labels], cells)


def _reference_nash(game: NormalFormGame) -> dict[tuple[str, ...], str]:
    """Enumerate every unilateral deviation directly on the payoff tensor."""
    kinds = {}
    for index in itertools.product(*(range(len(s)) for s in game.strategies)):
        strict = True
        stable = True
        for player in range(game.n):
            for alternative in range(len(game.strategies[player])):
                if alternative == index[player]:
                    continue
                moved = list(index)
                moved[player] = alternative
                gain = game.payoffs[tuple(moved)][player] - game.payoffs[index][player]
                if gain > 0:
                    stable = False
                elif gain == 0:
                    strict = False
        if stable:
            profile = tuple(game.strategies[p][i] for p, i in enumerate(index))
            kinds[profile] = "StrictNash" if strict else "WeakNash"
    return kinds


def _classified(game: NormalFormGame) -> dict[tuple[str, ...], str]:
    return {c.profile: c.kind for c in pure_nash_set(game)}


def test_fixture_before_matrix_has_mutual_defection_only() -> None:
    report = analyze_matrix(_fixture_matrix("before"))

    assert [(e.profile, e.kind) for e in report.equilibria] == [(("D", "D"), "StrictNash")]
    assert report.enforcement_holds is False
    assert report.margins == [pytest.approx(-206.9), pytest.approx(-206.9)]


def test_fixture_after_matrix_has_mutual_compliance_only() -> None:
    report = analyze_matrix(_fixture_matrix("after"))

    assert [(e.profile, e.kind) for e in report.equilibria] == [(("C", "C"), "StrictNash")]
    assert report.enforcement_holds is True
    assert report.margins == [pytest.approx(247.1), pytest.approx(247.1)]


def test_driving_game_has_two_strict_equilibria() -> None:
    game = _two_by_two(
        {("A", "A"): (1, 1), ("A", "B"): (0, 0), ("B", "A"): (0, 0), ("B", "B"): (1, 1)}
    )

    assert _classified(game) == {("A", "A"): "StrictNash", ("B", "B"): "StrictNash"}


def test_matching_pennies_has_no_pure_equilibrium() -> None:
    game = _two_by_two(
        {("A", "A"): (1, -1), ("A", "B"): (-1, 1), ("B", "A"): (-1, 1), ("B", "B"): (1, -1)}
    )

    assert pure_nash_set(game) == []
    assert is_nash(game, ("A", "A")).kind == "NotNash"


def test_constant_game_is_all_weak() -> None:
    game = _two_by_two({profile: (2, 2) for profile in itertools.product("AB", repeat=2)})

    assert set(_classified(game).values()) == {"WeakNash"}
    assert len(_classified(game)) == 4


def test_pure_nash_agrees_with_enumeration_on_random_2x2() -> None:
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        game = NormalFormGame(
            strategies=(("A", "B"), ("A", "B")),
            payoffs=rng.integers(-3, 4, size=(2, 2, 2)).astype(float),
        )
        assert _classified(game) == _reference_nash(game)


def test_pure_nash_agrees_with_enumeration_on_random_three_player() -> None:
    rng = np.random.default_rng(1)
    for _ in range(100):
        game = NormalFormGame(
            strategies=(("C", "D"),) * 3,
            payoffs=rng.integers(-2, 3, size=(2, 2, 2, 3)).astype(float),
        )
        assert _classified(game) == _reference_nash(game)


def test_equilibria_invariant_under_affine_payoff_change() -> None:
    rng = np.random.default_rng(5)
    for _ in range(200):
        payoffs = rng.integers(-5, 6, size=(2, 2, 2)).astype(float)
        shifted = payoffs * np.array([3.0, 2.0]) + np.array([7.0, -4.0])
        original = NormalFormGame(strategies=(("A", "B"), ("A", "B")), payoffs=payoffs)
        changed = NormalFormGame(strategies=(("A", "B"), ("A", "B")), payoffs=shifted)
        assert _classified(original) == _classified(changed)


def test_raising_payoff_at_strict_equilibrium_keeps_it() -> None:
    rng = np.random.default_rng(6)
    for _ in range(200):
        game = NormalFormGame(
            strategies=(("A", "B"), ("A", "B")),
            payoffs=rng.integers(-5, 6, size=(2, 2, 2)).astype(float),
        )
        for profile, kind in _classified(game).items():
            if kind != "StrictNash":
                continue
            boosted = game.payoffs.copy()
            index = tuple(("A", "B").index(s) for s in profile)
            boosted[index] += 1.0
            raised = NormalFormGame(strategies=game.strategies, payoffs=boosted)
            assert is_nash(raised, profile).kind == "StrictNash"


def test_regret_is_zero_exactly_at_equilibria() -> None:
    game = _fixture_matrix("before").to_game()

    for profile in game.profiles():
        stable = is_nash(game, profile).kind != "NotNash"
        assert (max(regret(game, profile)) == 0.0) == stable
    assert regret(game, ("C", "C")) == pytest.approx((206.9, 206.9))


def test_best_responses() -> None:
    game = _fixture_matrix("after").to_game()

    assert best_responses(game, ("C", "C"), 0) == ["C"]
    assert best_responses(game, ("D", "D"), 1) == ["C"]


def test_enforcement_requires_labels() -> None:
    game = _fixture_matrix("before").to_game()

    with pytest.raises(ContractViolationError, match="strategy_label_missing"):
        enforcement_holds(game, ("C", "X"))


def test_game_validates_shape_and_profiles() -> None:
    with pytest.raises(ContractViolationError, match="game_payoff_shape"):
        NormalFormGame(strategies=(("A", "B"),), payoffs=np.zeros((2, 2)))
    with pytest.raises(ContractViolationError, match="game_payoff_not_finite"):
        NormalFormGame(strategies=(("A",),), payoffs=np.array([[np.inf]]))
    with pytest.raises(ContractViolationError, match="payoff_profile_missing"):
        _two_by_two({("A", "A"): (1, 1)})

    game = _fixture_matrix("before").to_game()
    with pytest.raises(ContractViolationError, match="profile_invalid"):
        game.payoff(("C", "Z"))


def test_payoff_matrix_requires_all_cells() -> None:
    with pytest.raises(ValidationError, match="payoff_cells_incomplete"):
        PayoffMatrix2x2(cells=[{"profile": ("C", "C"), "payoffs": (1.0, 1.0)}])


def test_payoff_matrix_document_round_trip() -> None:
    matrix = _fixture_matrix("after")

    restored = PayoffMatrix2x2.model_validate_json(matrix.model_dump_json())

    assert restored == matrix
    assert restored.cell("C", "D").payoffs == (683.1, 481.0)


def _gather_towards_tree(observation: Observation):
    _zx, _zy, dx, dy, _bucket, _contested = observation.features
    return next(a for a in ACTIONS if a.kind == "gather" and (a.dx, a.dy) == (dx, dy))


def test_estimate_return_for_scripted_gather() -> None:
    spec = WorldSpec(
        width=2,
        height=1,
        profiles=(AgentProfile(agent_id=0, harvest_caps=(3,)),),
        tree_count=1,
        episode_length=1,
    )

    estimate = estimate_return([_gather_towards_tree], spec, episodes=5, gamma=0.9)

    assert estimate.means == (3.0,)
    assert estimate.standard_errors == (0.0,)
    assert estimate.episodes == 5


def _tiny_plan(**changes) -> EgtaPlan:
    settings = ScenarioSettings(
        width=5,
        height=5,
        tree_count=2,
        episode_length=8,
        training_episodes=2,
        evaluation_episodes=2,
        learner=LearnerConfig(batch_size=4),
    )
    fields = {"settings": settings, "boycott_ratio": 2.0, "seeds": (1, 2), "background_count": 1}
    fields.update(changes)
    return EgtaPlan(**fields)


def test_egta_plan_profiles() -> None:
    profiles = _tiny_plan(background_count=2).profiles_for(("D", "C"))

    assert [p.role for p in profiles] == ["defective", "compliant", "compliant", "compliant"]
    assert profiles[0].shaping == ()
    assert profiles[1].shaping[0].ratio == 2.0


def test_fill_empirical_matrix_is_complete_and_deterministic() -> None:
    first = fill_empirical_matrix(_tiny_plan())
    second = fill_empirical_matrix(_tiny_plan(max_workers=2))

    assert sorted(c.profile for c in first.matrix.cells) == [
        ("C", "C"),
        ("C", "D"),
        ("D", "C"),
        ("D", "D"),
    ]
    assert all(c.episodes == 4 for c in first.matrix.cells)
    assert all(len(v) == 2 for v in first.estimates.values())
    for cell in first.matrix.cells:
        assert second.matrix.cell(*cell.profile).payoffs == cell.payoffs


def test_fill_empirical_matrix_validates_plan() -> None:
    with pytest.raises(ContractViolationError, match="egta_focal_count_unsupported"):
        fill_empirical_matrix(_tiny_plan(focal_count=3))
    with pytest.raises(ContractViolationError, match="egta_seeds_empty"):
        fill_empirical_matrix(_tiny_plan(seeds=()))


def test_failed_cell_names_profile_and_seed(monkeypatch: pytest.MonkeyPatch) -> None:
    def failing_scenario(*_args, **_kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(gametheory_module, "run_scenario", failing_scenario)

    with pytest.raises(EgtaCellError, match=r"egta_cell_failed:CC:seed=1:boom"):
        fill_empirical_matrix(_tiny_plan())
