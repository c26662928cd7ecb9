"""Persisted artifacts of a run: CSV tables, JSON documents and SVG plots.

Column order and JSON key order are fixed so outputs of identical runs diff
cleanly. ``generated_at`` is the only field of ``summary.json`` that changes
between reruns of the same config and seed; wall-clock ``timing`` stays on the
report and is not written. Trained policies and classifiers go under
``models/`` only on request.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from threading import Lock

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from venom_module_regulation_enforcement.api.schemas import (  # noqa: E402
    PayoffAnalysis,
    RunReport,
)
from venom_module_regulation_enforcement.engine.detector import save_classifier  # noqa: E402
from venom_module_regulation_enforcement.engine.learner import save_approximator  # noqa: E402

logger = logging.getLogger(__name__)

RETURNS_COLUMNS = [
    "boycott_ratio",
    "repeat",
    "seed",
    "variant",
    "episode",
    "agent_id",
    "role",
    "capability",
    "focal",
    "return",
    "config_hash",
]
CURVE_COLUMNS = [
    "boycott_ratio",
    "avg_c",
    "se_c",
    "avg_d",
    "se_d",
    "counterfactual_avg_c",
    "counterfactual_focal_avg",
    "flag_rate_defective",
    "flag_rate_compliant",
    "config_hash",
    "seeds",
]
DETECTOR_COLUMNS = [
    "length",
    "train_accuracy",
    "test_accuracy",
    "majority_baseline",
    "train_windows",
    "test_windows",
    "config_hash",
    "seeds",
]

_locks_guard = Lock()
_dir_locks: dict[Path, Lock] = {}


class OutputWriteError(OSError):
    pass


def _dir_lock(output_dir: Path) -> Lock:
    with _locks_guard:
        return _dir_locks.setdefault(output_dir.resolve(), Lock())


def _seeds_label(report: RunReport) -> str:
    return " ".join(str(seed) for seed in report.seeds)


def returns_frame(report: RunReport) -> pd.DataFrame:
    frame = pd.DataFrame(
        [row.model_dump() for row in report.returns],
        columns=[*RETURNS_COLUMNS[:-2], "episode_return"],
    ).rename(columns={"episode_return": "return"})
    frame["config_hash"] = report.config_hash
    return frame[RETURNS_COLUMNS]


def summary_payload(report: RunReport) -> dict[str, object]:
    return report.model_dump(mode="json", exclude={"returns", "timing"})


def _payoff_payload(report: RunReport, payoff: PayoffAnalysis) -> dict[str, object]:
    return {
        "config_hash": report.config_hash,
        "seeds": report.seeds,
        **payoff.model_dump(mode="json"),
    }


def _write_json(path: Path, payload: object) -> None:
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def _plot_boycott_curve(curve: pd.DataFrame, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        if curve["avg_c"].notna().any():
            ax.errorbar(
                curve["boycott_ratio"], curve["avg_c"], yerr=curve["se_c"], label="Avg(C)"
            )
        if curve["avg_d"].notna().any():
            ax.errorbar(
                curve["boycott_ratio"], curve["avg_d"], yerr=curve["se_d"], label="Avg(D)"
            )
        if curve["counterfactual_focal_avg"].notna().any():
            ax.plot(
                curve["boycott_ratio"],
                curve["counterfactual_focal_avg"],
                color="red",
                linestyle="--",
                label="D if compliant",
            )
        ax.set_xlabel("Boycotting ratio B")
        ax.set_ylabel("Average episode return")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)


def _plot_detector_accuracy(metrics: pd.DataFrame, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        ax.plot(metrics["length"], metrics["train_accuracy"], marker="o", label="train")
        ax.plot(metrics["length"], metrics["test_accuracy"], marker="o", label="test")
        ax.set_xlabel("Sequence length L")
        ax.set_ylabel("Accuracy")
        ax.set_ylim(0.0, 1.05)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)


def emit_outputs(
    report: RunReport, output_dir: Path, *, save_models: bool = False
) -> dict[str, Path]:
    """Write every artifact the report supports and return them by name."""
    written: dict[str, Path] = {}
    with _dir_lock(output_dir):
        current = output_dir
        try:
            output_dir.mkdir(parents=True, exist_ok=True)

            current = output_dir / "summary.json"
            _write_json(current, summary_payload(report))
            written["summary"] = current

            if report.returns:
                current = output_dir / "returns.csv"
                returns_frame(report).to_csv(current, index=False)
                written["returns"] = current

            if report.points:
                curve = pd.DataFrame(
                    [point.model_dump() for point in report.points],
                    columns=CURVE_COLUMNS[:-2],
                )
                curve = curve.apply(pd.to_numeric)
                curve["config_hash"] = report.config_hash
                curve["seeds"] = _seeds_label(report)
                current = output_dir / "boycott_curve.csv"
                curve[CURVE_COLUMNS].to_csv(current, index=False)
                written["boycott_curve"] = current
                current = output_dir / "boycott_curve.svg"
                _plot_boycott_curve(curve, current)
                written["boycott_curve_plot"] = current

            if report.detector_metrics:
                metrics = pd.DataFrame(
                    [metric.model_dump() for metric in report.detector_metrics],
                    columns=DETECTOR_COLUMNS[:-2],
                )
                metrics["config_hash"] = report.config_hash
                metrics["seeds"] = _seeds_label(report)
                current = output_dir / "detector_metrics.csv"
                metrics[DETECTOR_COLUMNS].to_csv(current, index=False)
                written["detector_metrics"] = current
                current = output_dir / "detector_accuracy.svg"
                _plot_detector_accuracy(metrics, current)
                written["detector_accuracy_plot"] = current

            for name, payoff in (
                ("payoff_before", report.payoff_before),
                ("payoff_after", report.payoff_after),
            ):
                if payoff is None:
                    continue
                current = output_dir / f"{name}.json"
                _write_json(current, _payoff_payload(report, payoff))
                written[name] = current

            models = report.models
            if save_models and models is not None and (models.policies or models.classifiers):
                models_dir = output_dir / "models"
                for label, policies in sorted(models.policies.items()):
                    for agent_id, policy in enumerate(policies):
                        current = models_dir / label / f"agent_{agent_id}.json"
                        save_approximator(policy.approximator, current)
                for label, classifier in sorted(models.classifiers.items()):
                    current = models_dir / f"{label}.pt"
                    save_classifier(classifier, current)
                written["models"] = models_dir
        except OSError as exc:
            raise OutputWriteError(f"output_write_failed:{current}:{exc}") from exc
    logger.info("Wrote %d artifacts to %s", len(written), output_dir)
    return written
