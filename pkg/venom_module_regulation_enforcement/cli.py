"""Command-line entry point: ``regulation-enforcement {exp1,exp2,egta,detector}``."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from venom_module_regulation_enforcement.api.schemas import RunReport
from venom_module_regulation_enforcement.engine.detector import (
    ClassifierTrainingError,
    DatasetConstructionError,
)
from venom_module_regulation_enforcement.engine.gametheory import EgtaCellError
from venom_module_regulation_enforcement.engine.gridworld import (
    ContractViolationError,
    WorldConstructionError,
)
from venom_module_regulation_enforcement.services.experiments import (
    ConfigParseError,
    execute,
    parse_config,
)
from venom_module_regulation_enforcement.services.outputs import OutputWriteError
from venom_module_regulation_enforcement.services.settings import (
    RegulationEnforcementSettings,
)


SCENARIOS = ("exp1", "exp2", "egta", "detector")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regulation-enforcement",
        description="Run regulation enforcement experiments and write their results.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        sub = subparsers.add_parser(name, help=f"run the {name} scenario")
        sub.add_argument("--config", type=Path, required=True, help="JSON config file")
        sub.add_argument("--seed", type=int, default=None, help="master seed override")
        sub.add_argument("--out", type=Path, default=None, help="output directory")
        sub.add_argument(
            "--scale",
            choices=("desk", "full", "paper"),
            default=None,
            help="preset for keys the config leaves unset (default: desk; paper is full)",
        )
        sub.add_argument("--workers", type=int, default=None, help="parallel runs")
        sub.add_argument(
            "--save-models",
            action="store_true",
            help="also write trained policies and classifiers under models/",
        )
        sub.add_argument("--log-level", default="INFO")
    return parser


def _format_value(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


def render_summary(report: RunReport) -> str:
    lines = [f"scenario={report.scenario} config_hash={report.config_hash}"]
    if report.points:
        lines.append("B\tAvg(C)\tAvg(D)\tD if compliant")
        for point in report.points:
            lines.append(
                "\t".join(
                    [
                        f"{point.boycott_ratio:g}",
                        _format_value(point.avg_c),
                        _format_value(point.avg_d),
                        _format_value(point.counterfactual_focal_avg),
                    ]
                )
            )
    for metric in report.detector_metrics:
        lines.append(
            f"L={metric.length}\ttrain={metric.train_accuracy:.3f}\ttest={metric.test_accuracy:.3f}"
        )
    for label, payoff in (("before", report.payoff_before), ("after", report.payoff_after)):
        if payoff is None:
            continue
        equilibria = ", ".join(
            f"({','.join(entry.profile)}) {entry.kind}" for entry in payoff.analysis.equilibria
        )
        lines.append(
            f"{label}: equilibria=[{equilibria}] enforcement="
            f"{payoff.analysis.enforcement_holds} margins={payoff.analysis.margins}"
        )
    return "\n".join(lines)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    settings = RegulationEnforcementSettings.from_env()
    if args.workers is not None:
        settings = replace(settings, parallel_workers=min(16, max(1, args.workers)))
    try:
        config = parse_config(
            args.config,
            scale=args.scale,
            default_scale="desk",
            overrides={"seed": args.seed},
            scenario=args.command,
        )
        output_dir = args.out or (
            Path(config.output_dir) if config.output_dir else Path("results") / config.scenario
        )
        report, written = execute(
            config,
            output_dir,
            max_workers=settings.parallel_workers,
            save_models=args.save_models,
        )
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (
        ContractViolationError,
        WorldConstructionError,
        DatasetConstructionError,
        ClassifierTrainingError,
        EgtaCellError,
        OutputWriteError,
    ) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    print(render_summary(report))
    print(f"total_seconds={report.timing.get('total_seconds', 0.0):.1f}")
    for name, path in sorted(written.items()):
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
